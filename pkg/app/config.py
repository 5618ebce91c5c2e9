import os
from typing import List

from pydantic_settings import BaseSettings


class Settings(BaseSettings):

    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    # Run storage
    RUNS_DIR: str = os.getenv("RUNS_DIR", "runs")

    # Model defaults
    DEFAULT_K: int = int(os.getenv("DEFAULT_K", "20"))

    # Sampler defaults
    DEFAULT_CHAINS: int = int(os.getenv("DEFAULT_CHAINS", "4"))
    DEFAULT_WARMUP: int = int(os.getenv("DEFAULT_WARMUP", "1000"))
    DEFAULT_DRAWS: int = int(os.getenv("DEFAULT_DRAWS", "1000"))
    DEFAULT_SEED: int = int(os.getenv("DEFAULT_SEED", "2024"))

    # Single-station fits used for prior calibration
    STATION_FIT_WARMUP: int = int(os.getenv("STATION_FIT_WARMUP", "500"))
    STATION_FIT_DRAWS: int = int(os.getenv("STATION_FIT_DRAWS", "500"))

    # Admin settings
    ADMIN_BEARER_TOKEN: str = os.getenv("ADMIN_BEARER_TOKEN", "change-me-admin-token")

    # HTTP surface
    API_HOST: str = os.getenv("API_HOST", "0.0.0.0")
    API_PORT: int = int(os.getenv("API_PORT", "8000"))
    CORS_ORIGINS: List[str] = ["*"]

    class Config:
        env_file = ".env"


settings = Settings()
