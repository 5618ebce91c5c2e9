from typing import List, Optional

import numpy as np
from fastapi import APIRouter, HTTPException, Query

from app.models.api import (
    ParameterSummary,
    PredictRequest,
    ReturnLevelsResponse,
    ReturnLevelSummary,
    RunInfo,
)
from app.models.posterior import ReturnLevelPosterior, StationPosterior
from app.services.fit_service import FitService
from app.services.posterior import return_level_posterior, station_params
from app.storage import run_store
from app.utils.errors import InputValidationError
from app.utils.logging import logger

router = APIRouter(prefix="/api/v1", tags=["stations"])


def _response(run_id: str, sp: StationPosterior, rl: ReturnLevelPosterior) -> ReturnLevelsResponse:
    parameters = {}
    for name in ("mu", "sigma", "xi"):
        values = getattr(sp, name)
        q05, q95 = np.quantile(values, [0.05, 0.95])
        parameters[name] = ParameterSummary(mean=float(values.mean()), q05=float(q05), q95=float(q95))
    return ReturnLevelsResponse(
        run_id=run_id,
        station_id=sp.station_id,
        gauged=sp.gauged,
        parameters=parameters,
        return_levels=[
            ReturnLevelSummary(R=R, mean=rl.mean[i], q05=rl.q05[i], q50=rl.q50[i], q95=rl.q95[i], width=rl.width[i])
            for i, R in enumerate(rl.periods)
        ],
        clamped=sp.clamped,
    )


@router.get("/runs", response_model=List[RunInfo])
async def list_runs():
    """Stored fits available for prediction"""
    return [RunInfo(**run) for run in run_store.list_runs()]


@router.get("/runs/{run_id}/stations/{station_id}/return-levels", response_model=ReturnLevelsResponse)
async def get_return_levels(
    run_id: str,
    station_id: str,
    periods: Optional[List[float]] = Query(default=None, description="Return periods in years"),
):
    """
    Posterior return levels of a gauged station of a stored fit.

    Defaults to the return periods of the run's config.
    """
    try:
        run = run_store.load_fit(run_store.run_path(run_id))
        if station_id not in run.dataset.station_ids:
            raise HTTPException(status_code=404, detail=f"station {station_id} not in run {run_id}")
        s = run.dataset.station_ids.index(station_id)
        sp = station_params(run.draws, run.spec, run.design, s, station_id)
        rl = return_level_posterior(sp, periods or run.config.return_periods)
        return _response(run_id, sp, rl)

    except HTTPException:
        raise
    except FileNotFoundError as e:
        raise HTTPException(status_code=404, detail=str(e))
    except (InputValidationError, ValueError) as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        logger.error(f"Error in get_return_levels: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Internal server error: {str(e)}")


@router.post("/stations/predict", response_model=ReturnLevelsResponse)
async def predict_station(request: PredictRequest):
    """
    Ungauged prediction from raw covariate values

    Covariates are transformed and standardized with the stored training
    record; values outside the training range are clamped and listed.
    """
    try:
        run_dir = run_store.run_path(request.run_id)
        sp, rl = FitService.predict(
            run_dir, request.covariates, request.seed, request.return_periods, store=run_store
        )
        return _response(request.run_id, sp, rl)

    except FileNotFoundError as e:
        raise HTTPException(status_code=404, detail=str(e))
    except (KeyError, InputValidationError, ValueError) as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        logger.error(f"Error in predict_station: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Internal server error: {str(e)}")
