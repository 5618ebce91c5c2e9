from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.models.spec import ParamLayout


class PosteriorDraws(BaseModel):
    """Retained draws of every chain over the flat parameter vector.

    ``draws`` is (n_chains, n_draws, dim); the per-draw statistics share the
    leading two axes.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    draws: np.ndarray
    layout: ParamLayout
    log_joint: np.ndarray
    divergences: np.ndarray
    tree_depth: np.ndarray
    step_size: np.ndarray

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[1]

    @property
    def dim(self) -> int:
        return self.draws.shape[2]

    @property
    def divergence_count(self) -> int:
        return int(np.sum(self.divergences))

    def flat(self) -> np.ndarray:
        """Draws stacked chain after chain, shape (B, dim)."""
        return self.draws.reshape(-1, self.dim)

    def block(self, name: str) -> np.ndarray:
        return self.layout.get(self.flat(), name)


class StationFit(BaseModel):
    """Single-station Bayesian GEV fit used to calibrate the regional priors."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    station_id: str
    n_obs: int
    mu: np.ndarray
    sigma: np.ndarray
    xi: np.ndarray
    divergences: int = 0

    @property
    def mu_hat(self) -> float:
        return float(np.mean(self.mu))

    @property
    def sigma_hat(self) -> float:
        return float(np.mean(self.sigma))

    @property
    def xi_hat(self) -> float:
        return float(np.mean(self.xi))


class StationPosterior(BaseModel):
    """Per-draw GEV parameters at one station, gauged or predicted."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    station_id: str
    gauged: bool
    mu: np.ndarray
    sigma: np.ndarray
    xi: np.ndarray
    # ungauged only: simulated random effects, shape (B, 3) ordered (psi, tau, phi)
    u_tilde: Optional[np.ndarray] = None
    clamped: List[str] = Field(default_factory=list, description="covariates clamped to the training range")

    @property
    def n_draws(self) -> int:
        return int(self.mu.size)


class ReturnLevelPosterior(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    station_id: str
    periods: List[float]
    # (len(periods), B)
    draws: np.ndarray
    mean: List[float]
    q05: List[float]
    q50: List[float]
    q95: List[float]

    @property
    def width(self) -> List[float]:
        """90% credible interval width per return period."""
        return [hi - lo for lo, hi in zip(self.q05, self.q95)]
