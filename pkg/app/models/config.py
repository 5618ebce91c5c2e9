from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from app.config import settings
from app.models.dataset import Transform
from app.models.spec import ModelFamily, SamplerConfig
from app.utils.errors import InputValidationError

# one path component: no separators, never "." or ".."
RUN_ID_PATTERN = r"^[A-Za-z0-9][A-Za-z0-9._-]*$"


def _default_sampler() -> SamplerConfig:
    return SamplerConfig(
        n_chains=settings.DEFAULT_CHAINS,
        n_warmup=settings.DEFAULT_WARMUP,
        n_draws=settings.DEFAULT_DRAWS,
        seed=settings.DEFAULT_SEED,
    )


def _default_station_sampler() -> SamplerConfig:
    return SamplerConfig(
        n_chains=2,
        n_warmup=settings.STATION_FIT_WARMUP,
        n_draws=settings.STATION_FIT_DRAWS,
        seed=settings.DEFAULT_SEED,
    )


class CvSettings(BaseModel):
    folds: int = Field(default=2, ge=1)
    seed: int = 0
    benchmark: ModelFamily = ModelFamily.SPLINES_HS


class RunConfig(BaseModel):
    """One run document; validated in full before any computation starts."""

    model: ModelFamily = ModelFamily.SPLINES_HS
    models: List[ModelFamily] = Field(
        default_factory=lambda: [ModelFamily.LINEAR, ModelFamily.SPLINES, ModelFamily.SPLINES_HS]
    )
    n_basis: int = Field(default_factory=lambda: settings.DEFAULT_K, ge=5)
    sampler: SamplerConfig = Field(default_factory=_default_sampler)
    station_sampler: SamplerConfig = Field(default_factory=_default_station_sampler)
    return_periods: List[float] = Field(default_factory=lambda: [50.0, 100.0])
    cv: CvSettings = Field(default_factory=CvSettings)
    maxima_path: Optional[Path] = None
    covariates_path: Optional[Path] = None
    transforms: Dict[str, Transform] = Field(default_factory=dict)
    output_dir: Path = Field(default_factory=lambda: Path(settings.RUNS_DIR))
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)

    @field_validator("return_periods")
    @classmethod
    def check_periods(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("at least one return period is required")
        if any(not R > 1 for R in value):
            raise ValueError("return periods must exceed one block")
        return value

    @model_validator(mode="after")
    def check_benchmark(self) -> "RunConfig":
        if self.cv.benchmark not in self.models:
            raise ValueError(f"benchmark '{self.cv.benchmark.value}' is not among the compared models")
        return self

    def require_inputs(self) -> None:
        missing = [name for name in ("maxima_path", "covariates_path") if getattr(self, name) is None]
        if missing:
            raise InputValidationError(f"config lacks {', '.join(missing)}")
