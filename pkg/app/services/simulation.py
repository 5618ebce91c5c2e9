"""Synthetic basins with known covariate effects, for end-to-end checks."""

import json
from enum import Enum
from pathlib import Path
from typing import Dict, List

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from app.models.dataset import THETAS
from app.services.gev import gev_quantile_array, inverse_link_array, shape_link
from app.utils.errors import InputValidationError
from app.utils.logging import logger

BASELINE = {"psi": float(np.log(100.0)), "tau": float(np.log(0.3)), "phi": shape_link(0.1)}
# peak size of an active covariate's effect on each linked parameter
EFFECT_SIZE = {"psi": 0.4, "tau": 0.1, "phi": 0.1}
FIRST_YEAR = 1990


class EffectShape(str, Enum):
    LINEAR = "linear"
    NONLINEAR = "nonlinear"
    MIXED = "mixed"


class SimulationSettings(BaseModel):
    S: int = Field(..., ge=4)
    T: int = Field(..., ge=5)
    M: int = Field(..., ge=0)
    effects: EffectShape = EffectShape.NONLINEAR
    n_active: int = Field(default=2, ge=0)
    kappa: Dict[str, float] = Field(default_factory=lambda: {"psi": 0.2, "tau": 0.05, "phi": 0.05})
    intercept_only: bool = False
    seed: int = 0


class SimulatedBasin(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    maxima: pd.DataFrame
    covariates: pd.DataFrame
    truth: pd.DataFrame
    active: List[str]
    settings: SimulationSettings


def _effect(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == EffectShape.LINEAR:
        return x / 1.5
    return np.sin(np.pi * x / 2.0) * np.exp(-0.25 * x**2)


def simulate_basin(settings: SimulationSettings) -> SimulatedBasin:
    """Draw covariates, true linked parameters and GEV maxima for S stations.

    Covariates are uniform on (-2, 2). The first ``n_active`` covariates act on
    every linked parameter; the rest have identically zero effect.
    """
    if settings.n_active > settings.M:
        raise InputValidationError(f"{settings.n_active} active covariates requested but M={settings.M}")
    rng = np.random.default_rng(settings.seed)
    S, T, M = settings.S, settings.T, settings.M
    names = [f"x{m + 1}" for m in range(M)]
    X = rng.uniform(-2.0, 2.0, size=(S, M))

    kinds = []
    for m in range(settings.n_active):
        if settings.effects == EffectShape.MIXED:
            kinds.append(EffectShape.LINEAR if m % 2 == 0 else EffectShape.NONLINEAR)
        else:
            kinds.append(settings.effects)
    signs = rng.choice([-1.0, 1.0], size=(len(THETAS), settings.n_active))

    linked, effects = {}, {}
    for i, theta in enumerate(THETAS):
        value = np.full(S, BASELINE[theta])
        for m, name in enumerate(names):
            effect = np.zeros(S)
            if m < len(kinds) and not settings.intercept_only:
                effect = signs[i, m] * EFFECT_SIZE[theta] * _effect(kinds[m], X[:, m])
            effects[f"effect_{theta}_{name}"] = effect
            value = value + effect
        if not settings.intercept_only:
            value = value + settings.kappa.get(theta, 0.0) * rng.standard_normal(S)
        linked[theta] = value
    mu, sigma, xi = inverse_link_array(linked["psi"], linked["tau"], linked["phi"])

    u = rng.uniform(np.finfo(float).tiny, 1.0, size=(S, T))
    y = gev_quantile_array(u, mu[:, None], sigma[:, None], xi[:, None])

    station_ids = [f"ST{s + 1:04d}" for s in range(S)]
    maxima = pd.DataFrame(
        {
            "station_id": np.repeat(station_ids, T),
            "year": np.tile(np.arange(FIRST_YEAR, FIRST_YEAR + T), S),
            "maximum": y.ravel(),
        }
    )
    covariates = pd.DataFrame(X, columns=names)
    covariates.insert(0, "station_id", station_ids)
    truth = pd.DataFrame(
        {"station_id": station_ids, **linked, "mu": mu, "sigma": sigma, "xi": xi, **effects}
    )
    active = [] if settings.intercept_only else names[: settings.n_active]
    logger.info(f"simulated basin: S={S}, T={T}, M={M}, active={active}")
    return SimulatedBasin(maxima=maxima, covariates=covariates, truth=truth, active=active, settings=settings)


def write_basin(basin: SimulatedBasin, out_dir: Path) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "maxima": out_dir / "maxima.csv",
        "covariates": out_dir / "covariates.csv",
        "truth": out_dir / "truth.csv",
        "settings": out_dir / "simulation.json",
    }
    basin.maxima.to_csv(paths["maxima"], index=False)
    basin.covariates.to_csv(paths["covariates"], index=False)
    basin.truth.to_csv(paths["truth"], index=False)
    document = {**basin.settings.model_dump(mode="json"), "active": list(basin.active)}
    paths["settings"].write_text(json.dumps(document, indent=2), encoding="utf-8")
    return paths
