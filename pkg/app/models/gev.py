import math
from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator


def _finite(value: float) -> float:
    if not math.isfinite(value):
        raise ValueError(f"value must be finite, got {value}")
    return value


class GevParams(BaseModel):
    """Native GEV triple (location, scale, shape) for one station."""

    model_config = ConfigDict(frozen=True)

    mu: float
    sigma: float = Field(..., gt=0)
    xi: float

    @field_validator("mu", "sigma", "xi")
    @classmethod
    def check_finite(cls, value: float) -> float:
        return _finite(value)

    def endpoint(self) -> float:
        """mu - sigma/xi: upper bound for xi < 0, lower bound for xi > 0."""
        if self.xi == 0:
            return math.nan
        return self.mu - self.sigma / self.xi

    def support(self) -> Tuple[float, float]:
        if self.xi > 0:
            return self.endpoint(), math.inf
        if self.xi < 0:
            return -math.inf, self.endpoint()
        return -math.inf, math.inf


class LinkedParams(BaseModel):
    """GEV triple on the regression scale: (log mu, log(sigma/mu), h(xi))."""

    model_config = ConfigDict(frozen=True)

    psi: float
    tau: float
    phi: float

    @field_validator("psi", "tau", "phi")
    @classmethod
    def check_finite(cls, value: float) -> float:
        return _finite(value)


class ShapeLinkConstants(BaseModel):
    model_config = ConfigDict(frozen=True)

    a_phi: float = 0.062376
    b_phi: float = 0.39563
    c_phi: float = 0.8


class ReturnPeriod(BaseModel):
    model_config = ConfigDict(frozen=True)

    R: float = Field(..., gt=1, description="Return period in blocks (years)")

    @property
    def p(self) -> float:
        """Exceedance probability per block."""
        return 1.0 / self.R


DEFAULT_SHAPE_LINK = ShapeLinkConstants()
