from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

THETAS: Tuple[str, str, str] = ("psi", "tau", "phi")


class Transform(str, Enum):
    IDENTITY = "identity"
    LOG = "log"


class StandardizationRecord(BaseModel):
    """Per-covariate transform plus the training mean/sd used to standardize it."""

    names: List[str]
    transforms: List[Transform]
    means: List[float]
    sds: List[float]

    def apply(self, X_raw: np.ndarray) -> np.ndarray:
        X_raw = np.atleast_2d(np.asarray(X_raw, dtype=float))
        if X_raw.shape[1] != len(self.names):
            raise ValueError(f"expected {len(self.names)} covariates, got {X_raw.shape[1]}")
        if not self.names:
            return np.zeros((X_raw.shape[0], 0))
        columns = []
        for j, transform in enumerate(self.transforms):
            column = X_raw[:, j]
            if transform == Transform.LOG:
                if np.any(column <= 0):
                    raise ValueError(f"log transform of nonpositive value in '{self.names[j]}'")
                column = np.log(column)
            columns.append((column - self.means[j]) / self.sds[j])
        return np.column_stack(columns)


class Dataset(BaseModel):
    """Annual maxima of S stations (ragged) with standardized station covariates.

    ``y`` holds all N maxima; ``station_index[n]`` is the row of X for y[n].
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    station_ids: List[str]
    y: np.ndarray
    station_index: np.ndarray
    years: np.ndarray
    X: np.ndarray
    X_raw: np.ndarray
    standardization: StandardizationRecord

    @property
    def S(self) -> int:
        return len(self.station_ids)

    @property
    def M(self) -> int:
        return self.X.shape[1]

    @property
    def N(self) -> int:
        return int(self.y.size)

    @property
    def T(self) -> np.ndarray:
        """Number of blocks per station."""
        return np.bincount(self.station_index, minlength=self.S)

    @property
    def covariate_names(self) -> List[str]:
        return self.standardization.names

    def station_maxima(self, s: int) -> np.ndarray:
        return self.y[self.station_index == s]


class PriorCalibration(BaseModel):
    """Mean and sd of the linked single-station estimates, ordered (psi, tau, phi)."""

    m_hat: Tuple[float, float, float]
    s_hat: Tuple[float, float, float]
    clamped_stations: List[str] = Field(default_factory=list)
    # linked posterior-mean triples of the single-station fits, used to start chains
    linked_estimates: Dict[str, Tuple[float, float, float]] = Field(default_factory=dict)

    @field_validator("s_hat")
    @classmethod
    def check_positive(cls, value):
        if any(not (v > 0) for v in value):
            raise ValueError("prior scales must be positive")
        return value


class DroppedRow(BaseModel):
    source: str
    row: int
    station_id: Optional[str] = None
    reason: str


class IngestionReport(BaseModel):
    n_stations: int
    n_maxima: int
    blocks_per_station: Dict[str, int]
    dropped: List[DroppedRow] = Field(default_factory=list)
    rows_read: Dict[str, int] = Field(default_factory=dict)
