from contextlib import asynccontextmanager

import uvicorn
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware

from app.config import settings
from app.models.api import HealthResponse
from app.routers import admin, stations
from app.storage import run_store
from app.utils.logging import logger


@asynccontextmanager
async def lifespan(app: FastAPI):
    """
    Creates the run directory on startup and reports which stored fits
    can be served.
    """
    logger.info("Application startup initiated (via lifespan).")
    try:
        run_store.root.mkdir(parents=True, exist_ok=True)
        runs = run_store.list_runs()
        logger.info(f"{len(runs)} stored fit(s) under {run_store.root}: {[r['run_id'] for r in runs]}")

        yield

    finally:
        logger.info("Application shutdown initiated (via lifespan).")


app = FastAPI(
    title="GEV Flood Regression",
    version="v1",
    description="Return levels and ungauged-station predictions from regional Bayesian GEV fits",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.CORS_ORIGINS,
    allow_methods=["GET", "POST"],
    allow_headers=["*"],
)

app.include_router(admin.router)
app.include_router(stations.router)


@app.get("/", response_model=dict)
async def root():
    """API information"""
    return {
        "message": "GEV Flood Regression API",
        "version": "1.0.0",
        "endpoints": {
            "health": "/health",
            "runs": "/api/v1/runs",
            "return_levels": "/api/v1/runs/{run_id}/stations/{station_id}/return-levels",
            "predict": "/api/v1/stations/predict",
            "admin_fit": "/api/v1/admin/fit",
            "docs": "/docs",
        },
    }


@app.get("/health", response_model=HealthResponse)
async def health_check():
    """Run storage must be readable for the service to count as healthy"""
    try:
        return HealthResponse(
            status="healthy",
            runs_dir=str(run_store.root),
            n_runs=len(run_store.list_runs()),
        )
    except OSError as e:
        raise HTTPException(status_code=503, detail=f"Run storage unavailable: {str(e)}")


def serve(host: str = settings.API_HOST, port: int = settings.API_PORT) -> None:
    uvicorn.run("app.main:app", host=host, port=port, log_level=settings.LOG_LEVEL.lower())


if __name__ == "__main__":
    serve()
