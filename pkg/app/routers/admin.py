from datetime import datetime
import logging

from fastapi import APIRouter, Depends, HTTPException

from app.models.api import FitRequest, FitResponse
from app.services.fit_service import FitService
from app.storage import run_store
from app.utils.auth import verify_admin_token
from app.utils.errors import InputValidationError, SamplingError

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/v1/admin", tags=["admin"])


@router.post("/fit", response_model=FitResponse)
def fit_run(request: FitRequest, _: str = Depends(verify_admin_token)):
    """
    Fit one model family from a run config and store it

    This endpoint:
    1. Loads and standardizes the maxima and covariate files named in the config
    2. Fits every station alone and calibrates the regional priors
    3. Samples the regional model and writes the run directory
    4. Recomputes diagnostics from the stored draws
    """
    started_at = datetime.now()
    try:
        request.config.require_inputs()
        run_dir = run_store.create_run(request.run_id)
        summary = FitService(request.config, store=run_store).run(run_dir)
        return FitResponse(
            success=True,
            message=f"Fitted {summary.model.value} on {summary.n_stations} stations",
            run_id=run_dir.name,
            looic=summary.looic,
            divergences=summary.divergences,
            started_at=summary.started_at,
            completed_at=summary.completed_at,
            duration_seconds=summary.duration_seconds,
        )

    except InputValidationError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except SamplingError as e:
        logger.error(f"Sampling failed in fit endpoint: {e}")
        completed_at = datetime.now()
        return FitResponse(
            success=False,
            message="Sampling failed",
            started_at=started_at,
            completed_at=completed_at,
            duration_seconds=(completed_at - started_at).total_seconds(),
            errors=[str(e)],
        )
    except Exception as e:
        logger.error(f"Error in fit endpoint: {e}")
        raise HTTPException(status_code=500, detail=f"Fit failed: {str(e)}")
