from enum import Enum


class IngestErrorCode(str, Enum):
    DUPLICATE_KEY = "duplicate_key"
    NONPOSITIVE_MAXIMUM = "nonpositive_maximum"
    MISSING_COVARIATES = "missing_covariates"
    LOG_NONPOSITIVE = "log_nonpositive"
    MISSING_COLUMN = "missing_column"
    CONSTANT_COVARIATE = "constant_covariate"
    INVALID_VALUE = "invalid_value"


class GevToolkitError(Exception):
    """Base class for every error raised by the toolkit."""


class InputValidationError(GevToolkitError, ValueError):
    def __init__(self, message: str, code: IngestErrorCode = IngestErrorCode.INVALID_VALUE):
        super().__init__(message)
        self.code = code


class DegenerateBasisError(InputValidationError):
    pass


class DegenerateCalibrationError(InputValidationError):
    pass


class SamplingError(GevToolkitError, RuntimeError):
    pass
