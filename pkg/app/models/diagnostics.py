from datetime import datetime
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class LooResult(BaseModel):
    looic: float
    elpd_loo: float
    p_loo: float
    se: float
    pointwise: List[float]
    # observations whose truncated weights put (almost) all mass on one draw
    flagged: List[int] = Field(default_factory=list)


class ObservationScore(BaseModel):
    station_id: str
    year: int
    y: float
    pit: float = Field(..., ge=0, le=1)
    crps: float = Field(..., ge=0)


class StationScore(BaseModel):
    station_id: str
    n_blocks: int
    acrps: float = Field(..., ge=0)


class ReturnLevelScore(BaseModel):
    station_id: str
    R: float
    mean: float
    q05: float
    q95: float
    ciw: float = Field(..., ge=0)
    empirical: float
    pval: float = Field(..., ge=0, le=1)


class DiagnosticsReport(BaseModel):
    model: str
    observations: List[ObservationScore] = Field(default_factory=list)
    stations: List[StationScore] = Field(default_factory=list)
    return_levels: List[ReturnLevelScore] = Field(default_factory=list)
    # R -> share of stations with p-value inside (0.05, 0.95)
    pval_band: Dict[str, float] = Field(default_factory=dict)
    loo: Optional[LooResult] = None

    @property
    def looic(self) -> Optional[float]:
        return self.loo.looic if self.loo else None


class FoldPlan(BaseModel):
    folds: List[List[str]]
    seed: int

    @property
    def G(self) -> int:
        return len(self.folds)

    def training(self, fold: int, station_ids: List[str]) -> List[str]:
        held_out = set(self.folds[fold])
        return [s for s in station_ids if s not in held_out]


class FoldStatus(str, Enum):
    SUCCESS = "success"
    FAILED = "failed"
    PARTIAL = "partial"


class FoldResult(BaseModel):
    fold: int
    held_out: List[str]
    status: FoldStatus
    reports: Dict[str, DiagnosticsReport] = Field(default_factory=dict)
    # model -> theta -> posterior mean of the intercept
    intercepts: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    errors: List[str] = Field(default_factory=list)


class CvResult(BaseModel):
    plan: FoldPlan
    models: List[str]
    folds: List[FoldResult]
    status: FoldStatus
    started_at: datetime
    completed_at: Optional[datetime] = None
    duration_seconds: Optional[float] = None
    full_data_intercepts: Dict[str, Dict[str, float]] = Field(default_factory=dict)


class StationRatio(BaseModel):
    model: str
    station_id: str
    acrps_ratio: float
    # R -> interval width ratio
    ciw_ratio: Dict[str, float]


class RelativeMetrics(BaseModel):
    benchmark: str
    stations: List[StationRatio]
    median_acrps_ratio: Dict[str, float]
    share_acrps_above_one: Dict[str, float]
    # model -> R -> value
    median_ciw_ratio: Dict[str, Dict[str, float]]
    share_ciw_below_one: Dict[str, Dict[str, float]]
    # held-out stations whose benchmark scores are zero or not finite
    excluded: List[str] = []
