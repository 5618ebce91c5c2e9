"""Full-data fits: calibration, sampling, persistence and the diagnose pass."""

from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from app.models.config import RunConfig
from app.models.dataset import Dataset, IngestionReport, PriorCalibration
from app.models.diagnostics import DiagnosticsReport
from app.models.posterior import PosteriorDraws, ReturnLevelPosterior, StationFit, StationPosterior
from app.models.spec import ModelDesign, ModelFamily, ModelSpec
from app.services.diagnostics import build_report, loo_ic, report_to_long_frame
from app.services.ingest_service import AccessHook, load_dataset
from app.services.model import build_design
from app.services.posterior import (
    calibrate_priors,
    fit_station_gev,
    group_effect_norms,
    pointwise_log_likelihood,
    predict_ungauged,
    random_effect_scales,
    return_level_posterior,
    station_params,
)
from app.services.sampler_service import sample, summarize_draws
from app.storage import RunStore, StoredRun, run_store
from app.utils.logging import logger


class FittedModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    spec: ModelSpec
    design: ModelDesign
    draws: PosteriorDraws


class FitSummary(BaseModel):
    run_dir: Path
    model: ModelFamily
    n_stations: int
    n_maxima: int
    divergences: int
    looic: Optional[float] = None
    started_at: datetime
    completed_at: datetime
    duration_seconds: float


def fit_station_models(
    dataset: Dataset,
    config: RunConfig,
    access_hook: Optional[AccessHook] = None,
) -> Dict[str, StationFit]:
    """Single-station fits of every station, each with its own seed."""
    fits = {}
    for s, station in enumerate(dataset.station_ids):
        if access_hook is not None:
            access_hook("station_fit", station)
        cfg = config.station_sampler.model_copy(update={"seed": config.station_sampler.seed + 7919 * s})
        fits[station] = fit_station_gev(dataset.station_maxima(s), cfg, station_id=station)
    logger.info(f"fitted {len(fits)} single-station models")
    return fits


def fit_model(
    dataset: Dataset,
    family: ModelFamily,
    calibration: PriorCalibration,
    config: RunConfig,
    seed: Optional[int] = None,
) -> FittedModel:
    spec = ModelSpec(
        family=family,
        n_basis=config.n_basis,
        calib=calibration,
        covariates=dataset.covariate_names,
    )
    design = build_design(spec, dataset.X)
    sampler = config.sampler if seed is None else config.sampler.model_copy(update={"seed": seed})
    return FittedModel(spec=spec, design=design, draws=sample(spec, dataset, design, sampler))


def gauged_posteriors(spec: ModelSpec, design: ModelDesign, draws: PosteriorDraws, dataset: Dataset) -> List[StationPosterior]:
    return [station_params(draws, spec, design, s, station) for s, station in enumerate(dataset.station_ids)]


def station_tables(
    posteriors: Sequence[StationPosterior], periods: Sequence[float]
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    params, levels = [], []
    for sp in posteriors:
        row = {"station_id": sp.station_id}
        for name in ("mu", "sigma", "xi"):
            values = getattr(sp, name)
            row[f"{name}_mean"] = float(values.mean())
            row[f"{name}_q05"], row[f"{name}_q95"] = (float(v) for v in np.quantile(values, [0.05, 0.95]))
        params.append(row)
        rl = return_level_posterior(sp, periods)
        levels.extend(_return_level_rows(rl))
    return pd.DataFrame(params), pd.DataFrame(levels)


def _return_level_rows(rl: ReturnLevelPosterior) -> List[dict]:
    return [
        {
            "station_id": rl.station_id,
            "R": R,
            "mean": rl.mean[i],
            "q05": rl.q05[i],
            "q50": rl.q50[i],
            "q95": rl.q95[i],
            "width": rl.width[i],
        }
        for i, R in enumerate(rl.periods)
    ]


class FitService:
    def __init__(self, config: RunConfig, store: RunStore = run_store):
        self.config = config
        self.store = store

    def run(self, run_dir: Optional[Path] = None) -> FitSummary:
        """Load data, calibrate, sample one family, persist, then diagnose from disk."""
        config = self.config
        config.require_inputs()
        started_at = datetime.now()
        dataset, ingestion = load_dataset(config.maxima_path, config.covariates_path, config.transforms)
        fits = fit_station_models(dataset, config)
        calibration = calibrate_priors(list(fits.values()))
        fitted = fit_model(dataset, config.model, calibration, config)

        run_dir = Path(run_dir) if run_dir is not None else self.store.create_run()
        self.store.save_fit(run_dir, config, fitted.spec, dataset, fitted.draws)
        self.write_fit_tables(run_dir, fitted, dataset, fits, ingestion)
        report = self.diagnose(run_dir, self.store)

        completed_at = datetime.now()
        summary = FitSummary(
            run_dir=run_dir,
            model=config.model,
            n_stations=dataset.S,
            n_maxima=dataset.N,
            divergences=fitted.draws.divergence_count,
            looic=report.looic,
            started_at=started_at,
            completed_at=completed_at,
            duration_seconds=(completed_at - started_at).total_seconds(),
        )
        self.store.write_json(run_dir, "fit_summary.json", summary)
        return summary

    def write_fit_tables(
        self,
        run_dir: Path,
        fitted: FittedModel,
        dataset: Dataset,
        fits: Dict[str, StationFit],
        ingestion: IngestionReport,
    ) -> None:
        store = self.store
        store.write_json(run_dir, "ingestion.json", ingestion)
        store.write_frame(run_dir, "summary.csv", summarize_draws(fitted.draws))
        posteriors = gauged_posteriors(fitted.spec, fitted.design, fitted.draws, dataset)
        params, levels = station_tables(posteriors, self.config.return_periods)
        store.write_frame(run_dir, "station_params.csv", params)
        store.write_frame(run_dir, "return_levels.csv", levels)
        store.write_frame(run_dir, "random_effect_scales.csv", random_effect_scales(fitted.draws, fitted.spec))
        if fitted.spec.M:
            store.write_frame(
                run_dir, "group_effect_norms.csv", group_effect_norms(fitted.draws, fitted.spec, fitted.design)
            )
        store.write_frame(
            run_dir,
            "station_fits.csv",
            pd.DataFrame(
                [
                    {"station_id": f.station_id, "n_obs": f.n_obs, "mu_hat": f.mu_hat, "sigma_hat": f.sigma_hat, "xi_hat": f.xi_hat}
                    for f in fits.values()
                ]
            ),
        )

    @staticmethod
    def diagnose(run_dir: Path, store: RunStore = run_store) -> DiagnosticsReport:
        """Recompute the diagnostics report of a stored fit; output depends only on the run files."""
        run = store.load_fit(run_dir)
        report = diagnose_stored(run)
        store.write_json(run_dir, "diagnostics.json", report)
        store.write_frame(run_dir, "diagnostics_long.csv", report_to_long_frame(report))
        return report

    @staticmethod
    def predict(
        run_dir: Path,
        covariates: Dict[str, float],
        seed: int,
        periods: Optional[Sequence[float]] = None,
        store: RunStore = run_store,
    ) -> Tuple[StationPosterior, ReturnLevelPosterior]:
        run = store.load_fit(run_dir)
        names = run.dataset.covariate_names
        missing = [n for n in names if n not in covariates]
        if missing:
            raise KeyError(f"missing covariate(s) {missing}")
        row = np.array([[float(covariates[n]) for n in names]])
        sp = predict_ungauged(
            run.draws, run.spec, run.design, row, seed=seed, standardization=run.dataset.standardization
        )
        return sp, return_level_posterior(sp, periods or run.config.return_periods)


def diagnose_stored(run: StoredRun) -> DiagnosticsReport:
    dataset = run.dataset
    posteriors = gauged_posteriors(run.spec, run.design, run.draws, dataset)
    maxima = {station: dataset.station_maxima(s) for s, station in enumerate(dataset.station_ids)}
    years = {station: dataset.years[dataset.station_index == s] for s, station in enumerate(dataset.station_ids)}
    loglik = pointwise_log_likelihood(run.draws, run.spec, run.design, dataset)
    loo = None
    if np.all(np.isfinite(loglik)):
        loo = loo_ic(loglik)
    else:
        logger.warning("some draws place observations outside the GEV support; LOO skipped")
    return build_report(
        run.spec.family.value, posteriors, maxima, years, run.config.return_periods, run.config.seed, loo=loo
    )

