"""Station-holdout cross-validation: refit every family per fold, score held-out stations."""

from collections import defaultdict
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.models.config import RunConfig
from app.models.dataset import Dataset
from app.models.diagnostics import (
    CvResult,
    FoldPlan,
    FoldResult,
    FoldStatus,
    RelativeMetrics,
    StationRatio,
)
from app.models.posterior import StationFit
from app.models.spec import ModelFamily
from app.services.diagnostics import build_report, report_to_long_frame
from app.services.fit_service import fit_model, fit_station_models
from app.services.ingest_service import subset_dataset
from app.services.posterior import calibrate_priors, intercept_means, predict_ungauged
from app.services.sampler_service import summarize_draws
from app.storage import RunStore
from app.utils.errors import GevToolkitError, InputValidationError
from app.utils.logging import logger

MIN_TRAINING_STATIONS = 10

# hook(fold, purpose, station_id); fold is None for work shared by all folds
FoldAccessHook = Callable[[Optional[int], str, str], None]


def partition_folds(stations: Union[int, Sequence[str]], G: int, seed: int) -> FoldPlan:
    """Seeded random split of stations into G folds whose sizes differ by at most one."""
    station_ids = [str(s) for s in range(stations)] if isinstance(stations, int) else list(stations)
    S = len(station_ids)
    if not 1 <= G <= S:
        raise InputValidationError(f"number of folds must lie in [1, {S}], got {G}")
    order = np.random.default_rng(seed).permutation(S)
    folds = [[station_ids[i] for i in chunk] for chunk in np.array_split(order, G)]
    return FoldPlan(folds=folds, seed=seed)


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0]) % (2**31 - 1)


class CrossValidationService:
    def __init__(
        self,
        config: RunConfig,
        access_hook: Optional[FoldAccessHook] = None,
        store: Optional[RunStore] = None,
    ):
        self.config = config
        self.access_hook = access_hook
        self.store = store or RunStore()

    def _touch(self, fold: Optional[int], purpose: str, station: str) -> None:
        if self.access_hook is not None:
            self.access_hook(fold, purpose, station)

    def check_plan(self, dataset: Dataset, plan: FoldPlan) -> None:
        flat = [s for fold in plan.folds for s in fold]
        if sorted(flat) != sorted(dataset.station_ids) or len(set(flat)) != len(flat):
            raise InputValidationError("fold plan does not partition the dataset's stations")
        if plan.G < 2:
            raise InputValidationError("cross-validation needs at least two folds")
        for g, fold in enumerate(plan.folds):
            n_train = dataset.S - len(fold)
            if n_train < MIN_TRAINING_STATIONS:
                raise InputValidationError(
                    f"fold {g} leaves {n_train} training stations, at least {MIN_TRAINING_STATIONS} required"
                )

    def run_cv(
        self,
        dataset: Dataset,
        families: Sequence[ModelFamily],
        plan: FoldPlan,
        station_fits: Optional[Dict[str, StationFit]] = None,
        out_dir: Optional[Path] = None,
        full_data: bool = False,
    ) -> CvResult:
        self.check_plan(dataset, plan)
        started_at = datetime.now()
        families = list(families)
        logger.info(f"cross-validation: {plan.G} folds x {len(families)} models, S={dataset.S}")

        if station_fits is None:
            station_fits = fit_station_models(
                dataset, self.config, access_hook=lambda purpose, s: self._touch(None, purpose, s)
            )

        folds = [
            self.run_fold(g, dataset, families, plan, station_fits, out_dir) for g in range(plan.G)
        ]

        full_intercepts = {}
        if full_data:
            calibration = calibrate_priors(list(station_fits.values()))
            for family in families:
                fitted = fit_model(dataset, family, calibration, self.config)
                full_intercepts[family.value] = intercept_means(fitted.draws)

        succeeded = sum(f.status == FoldStatus.SUCCESS for f in folds)
        if succeeded == len(folds):
            status = FoldStatus.SUCCESS
        elif any(f.reports for f in folds):
            status = FoldStatus.PARTIAL
        else:
            status = FoldStatus.FAILED
        completed_at = datetime.now()
        result = CvResult(
            plan=plan,
            models=[f.value for f in families],
            folds=folds,
            status=status,
            started_at=started_at,
            completed_at=completed_at,
            duration_seconds=(completed_at - started_at).total_seconds(),
            full_data_intercepts=full_intercepts,
        )
        logger.info(f"cross-validation finished: {status.value} ({succeeded}/{len(folds)} folds complete)")
        if out_dir is not None:
            self.write_aggregate(Path(out_dir), result)
        return result

    def run_fold(
        self,
        g: int,
        dataset: Dataset,
        families: List[ModelFamily],
        plan: FoldPlan,
        station_fits: Dict[str, StationFit],
        out_dir: Optional[Path] = None,
    ) -> FoldResult:
        held_out = list(plan.folds[g])
        training_ids = plan.training(g, dataset.station_ids)
        seed = fold_seed(self.config.cv.seed, g)
        logger.info(f"fold {g}: holding out {held_out}")
        result = FoldResult(fold=g, held_out=held_out, status=FoldStatus.SUCCESS)
        fold_dir = None
        if out_dir is not None:
            fold_dir = Path(out_dir) / f"fold_{g:03d}"
            fold_dir.mkdir(parents=True, exist_ok=True)

        try:
            train = subset_dataset(
                dataset, training_ids, access_hook=lambda purpose, s: self._touch(g, purpose, s)
            )
            for station in training_ids:
                self._touch(g, "calibrate", station)
            calibration = calibrate_priors([station_fits[s] for s in training_ids])
        except GevToolkitError as e:
            logger.error(f"fold {g} failed before fitting: {e}")
            return result.model_copy(update={"status": FoldStatus.FAILED, "errors": [str(e)]})

        position = {s: i for i, s in enumerate(dataset.station_ids)}
        maxima = {s: dataset.station_maxima(position[s]) for s in held_out}
        years = {s: dataset.years[dataset.station_index == position[s]] for s in held_out}

        for family in families:
            try:
                for station in training_ids:
                    self._touch(g, "fit", station)
                fitted = fit_model(train, family, calibration, self.config, seed=seed)
                posteriors = []
                for i, station in enumerate(held_out):
                    self._touch(g, "score", station)
                    posteriors.append(
                        predict_ungauged(
                            fitted.draws,
                            fitted.spec,
                            fitted.design,
                            dataset.X_raw[position[station]],
                            seed=seed + i,
                            standardization=train.standardization,
                            station_id=station,
                        )
                    )
                report = build_report(
                    family.value, posteriors, maxima, years, self.config.return_periods, seed
                )
                result.reports[family.value] = report
                result.intercepts[family.value] = intercept_means(fitted.draws)
                if fold_dir is not None:
                    self.store.write_frame(fold_dir, f"{family.value}_summary.csv", summarize_draws(fitted.draws))
                    self.store.write_json(fold_dir, f"{family.value}_diagnostics.json", report)
                    self.store.write_frame(
                        fold_dir, f"{family.value}_diagnostics_long.csv", report_to_long_frame(report)
                    )
            except Exception as e:
                logger.error(f"fold {g}, model {family.value} failed: {e}")
                result.errors.append(f"{family.value}: {e}")

        if result.errors:
            status = FoldStatus.PARTIAL if result.reports else FoldStatus.FAILED
            result = result.model_copy(update={"status": status})
        if fold_dir is not None:
            self.store.write_json(
                fold_dir, "fold.json", result.model_dump(mode="json", exclude={"reports"})
            )
        return result

    def write_aggregate(self, out_dir: Path, result: CvResult) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        self.store.write_json(out_dir, "cv_result.json", result)
        self.store.write_frame(out_dir, "intercepts.csv", intercept_frame(result))
        frames = [
            report_to_long_frame(report).assign(fold=fold.fold)
            for fold in result.folds
            for report in fold.reports.values()
        ]
        if frames:
            self.store.write_frame(out_dir, "diagnostics_long.csv", pd.concat(frames, ignore_index=True))
        benchmark = self.config.cv.benchmark.value
        if benchmark in result.models and any(benchmark in f.reports for f in result.folds):
            metrics = relative_metrics(result, benchmark)
            self.store.write_json(out_dir, "relative_metrics.json", metrics)
            self.store.write_frame(out_dir, "relative_metrics.csv", relative_frame(metrics))


def intercept_frame(result: CvResult) -> pd.DataFrame:
    rows = [
        {"fold": fold.fold, "model": model, "theta": theta, "mean": value}
        for fold in result.folds
        for model, values in fold.intercepts.items()
        for theta, value in values.items()
    ]
    rows += [
        {"fold": -1, "model": model, "theta": theta, "mean": value}
        for model, values in result.full_data_intercepts.items()
        for theta, value in values.items()
    ]
    return pd.DataFrame(rows, columns=["fold", "model", "theta", "mean"])


def _usable_benchmark(acrps: float, widths: Sequence[float]) -> bool:
    values = np.array([acrps, *widths], dtype=float)
    return bool(np.all(np.isfinite(values)) and np.all(values > 0.0))


def relative_metrics(cv: CvResult, benchmark: str) -> RelativeMetrics:
    """ACRPS and interval-width ratios of every model against ``benchmark``, per held-out station.

    Stations whose benchmark ACRPS or interval width is zero or not finite
    have no meaningful ratio; they are left out and listed in ``excluded``.
    """
    scored = [f for f in cv.folds if f.reports]
    if not scored or any(benchmark not in f.reports for f in scored):
        raise ValueError(f"benchmark '{benchmark}' is missing from some folds")

    ratios: List[StationRatio] = []
    excluded: List[str] = []
    for fold in scored:
        bench = fold.reports[benchmark]
        bench_acrps = {s.station_id: s.acrps for s in bench.stations}
        bench_ciw = {(r.station_id, r.R): r.ciw for r in bench.return_levels}
        usable = {
            sid: _usable_benchmark(acrps, [w for (s, _), w in bench_ciw.items() if s == sid])
            for sid, acrps in bench_acrps.items()
        }
        dropped = sorted(sid for sid, ok in usable.items() if not ok)
        if dropped:
            logger.warning(f"fold {fold.fold}: degenerate {benchmark} scores, no ratios for stations {dropped}")
            excluded += dropped
        for model, report in fold.reports.items():
            ciw = defaultdict(dict)
            for r in report.return_levels:
                if usable[r.station_id]:
                    ciw[r.station_id][f"{r.R:g}"] = r.ciw / bench_ciw[(r.station_id, r.R)]
            for s in report.stations:
                if not usable[s.station_id]:
                    continue
                ratios.append(
                    StationRatio(
                        model=model,
                        station_id=s.station_id,
                        acrps_ratio=s.acrps / bench_acrps[s.station_id],
                        ciw_ratio=dict(ciw[s.station_id]),
                    )
                )

    median_acrps, share_above, median_ciw, share_below = {}, {}, {}, {}
    for model in sorted({r.model for r in ratios}):
        rows = [r for r in ratios if r.model == model]
        acrps_values = np.array([r.acrps_ratio for r in rows])
        median_acrps[model] = float(np.median(acrps_values))
        share_above[model] = float(np.mean(acrps_values > 1.0))
        median_ciw[model], share_below[model] = {}, {}
        for key in rows[0].ciw_ratio:
            values = np.array([r.ciw_ratio[key] for r in rows])
            median_ciw[model][key] = float(np.median(values))
            share_below[model][key] = float(np.mean(values < 1.0))
    return RelativeMetrics(
        benchmark=benchmark,
        stations=ratios,
        median_acrps_ratio=median_acrps,
        share_acrps_above_one=share_above,
        median_ciw_ratio=median_ciw,
        share_ciw_below_one=share_below,
        excluded=excluded,
    )


def relative_frame(metrics: RelativeMetrics) -> pd.DataFrame:
    rows = []
    for r in metrics.stations:
        rows.append({"model": r.model, "station_id": r.station_id, "metric": "acrps_ratio", "R": "", "value": r.acrps_ratio})
        for key, value in r.ciw_ratio.items():
            rows.append({"model": r.model, "station_id": r.station_id, "metric": "ciw_ratio", "R": key, "value": value})
    return pd.DataFrame(rows, columns=["model", "station_id", "metric", "R", "value"])
