# Logging configuration
import logging
import sys
from app.config import settings


class CustomFormatter(logging.Formatter):
    """Level-coloured records with the emitting file, line and function.

    Colours are only applied when the stream is a terminal, so redirected
    fit and cv logs stay plain text.
    """

    FORMAT = "%(levelname)s  %(asctime)s - %(name)s - %(message)s (%(filename)s:%(lineno)d in %(funcName)s)"

    COLORS = {
        "DEBUG": "\033[94m",  # Blue
        "INFO": "\033[92m",  # Green
        "WARNING": "\033[93m",  # Yellow
        "ERROR": "\033[91m",  # Red
        "CRITICAL": "\033[95m",  # Magenta
    }
    RESET = "\033[0m"

    def __init__(self, use_color: bool = True):
        super().__init__(self.FORMAT)
        self.use_color = use_color

    def format(self, record):
        text = super().format(record)
        if not self.use_color:
            return text
        return self.COLORS.get(record.levelname, self.RESET) + text + self.RESET


def configure_logger(name: str = "gevflood", level: str = settings.LOG_LEVEL, stream=None) -> logging.Logger:
    # stderr, so CLI results on stdout stay machine-readable
    stream = stream if stream is not None else sys.stderr
    configured = logging.getLogger(name)
    configured.setLevel(level)
    if not configured.handlers:
        handler = logging.StreamHandler(stream)
        handler.setLevel(level)
        handler.setFormatter(CustomFormatter(use_color=hasattr(stream, "isatty") and stream.isatty()))
        configured.addHandler(handler)
    return configured


logger = configure_logger()

# numpyro/jax chatter about device counts is not useful at this level
logging.getLogger("jax").setLevel(logging.WARNING)
