from datetime import datetime
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from app.models.config import RUN_ID_PATTERN, RunConfig


class HealthResponse(BaseModel):
    status: str
    runs_dir: str
    n_runs: int


class RunInfo(BaseModel):
    run_id: str
    model: str
    covariates: List[str]
    n_stations: int


class ReturnLevelSummary(BaseModel):
    R: float
    mean: float
    q05: float
    q50: float
    q95: float
    width: float


class ParameterSummary(BaseModel):
    mean: float
    q05: float
    q95: float


class ReturnLevelsResponse(BaseModel):
    run_id: str
    station_id: str
    gauged: bool
    parameters: Dict[str, ParameterSummary]
    return_levels: List[ReturnLevelSummary]
    clamped: List[str] = []


class PredictRequest(BaseModel):
    run_id: str
    covariates: Dict[str, float] = Field(..., description="Raw (untransformed) covariate values by name")
    seed: int = 0
    return_periods: Optional[List[float]] = None


class FitRequest(BaseModel):
    config: RunConfig
    run_id: Optional[str] = Field(default=None, pattern=RUN_ID_PATTERN)


class FitResponse(BaseModel):
    success: bool
    message: str
    run_id: Optional[str] = None
    looic: Optional[float] = None
    divergences: Optional[int] = None
    started_at: datetime
    completed_at: Optional[datetime] = None
    duration_seconds: Optional[float] = None
    errors: List[str] = []
