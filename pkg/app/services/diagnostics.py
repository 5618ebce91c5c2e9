"""Predictive checks: PIT, return-level p-values, CRPS and the LOO criterion."""

from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from app.models.diagnostics import (
    DiagnosticsReport,
    LooResult,
    ObservationScore,
    ReturnLevelScore,
    StationScore,
)
from app.models.posterior import StationPosterior
from app.services.posterior import posterior_predictive, return_level_posterior
from app.utils.logging import logger

MIN_PIT_REPLICATES = 100
PVAL_BAND = (0.05, 0.95)


def pit(replicates: np.ndarray, y: float) -> float:
    """Share of predictive replicates strictly below ``y``."""
    replicates = np.asarray(replicates, dtype=float).ravel()
    if replicates.size == 0:
        raise ValueError("PIT needs at least one replicate")
    if replicates.size < MIN_PIT_REPLICATES:
        logger.warning(f"PIT from only {replicates.size} replicates")
    return float(np.mean(replicates < y))


def empirical_quantile(y: np.ndarray, level: float) -> float:
    """Sample quantile with linear interpolation between order statistics (type 7)."""
    return float(np.quantile(np.asarray(y, dtype=float), level, method="linear"))


def bayes_pval(rl_draws: np.ndarray, y_s: np.ndarray, R: float) -> float:
    y_s = np.asarray(y_s, dtype=float)
    if y_s.size == 0:
        raise ValueError("station sample is empty")
    level = 1.0 - 1.0 / R
    if not 0.0 < level < 1.0:
        raise ValueError(f"return period {R} gives quantile level {level} outside (0, 1)")
    return float(np.mean(np.asarray(rl_draws, dtype=float) < empirical_quantile(y_s, level)))


def pval_band_summary(pvals: Sequence[float], lower: float = PVAL_BAND[0], upper: float = PVAL_BAND[1]) -> float:
    pvals = np.asarray(pvals, dtype=float)
    if pvals.size == 0:
        raise ValueError("no p-values to summarize")
    return float(np.mean((pvals > lower) & (pvals < upper)))


def crps_sample(replicates: np.ndarray, y: float) -> float:
    """Energy-form CRPS of an ensemble, mean|X - y| - 0.5 mean|X - X'|.

    The pairwise term over all B^2 ordered pairs is evaluated exactly from
    the sorted sample: sum_ij |x_i - x_j| = 2 sum_i (2i - B - 1) x_(i).
    """
    x = np.sort(np.asarray(replicates, dtype=float).ravel())
    B = x.size
    if B == 0:
        raise ValueError("CRPS needs at least one replicate")
    accuracy = np.mean(np.abs(x - y))
    weights = 2.0 * np.arange(1, B + 1) - B - 1
    spread = 2.0 * np.sum(weights * x) / B**2
    return float(max(accuracy - 0.5 * spread, 0.0))


def acrps(scores: Sequence[float]) -> float:
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("station has no scored blocks")
    return float(np.mean(scores))


def relative_acrps(scores: Sequence[float], benchmark_scores: Sequence[float]) -> float:
    return acrps(scores) / acrps(benchmark_scores)


def loo_ic(loglik: np.ndarray) -> LooResult:
    """Truncated importance-sampling leave-one-out criterion.

    ``loglik`` is (draws, N). Raw weights 1/p(y_n | theta_b) are truncated at
    mean weight times sqrt(draws).
    """
    loglik = np.asarray(loglik, dtype=float)
    if loglik.ndim != 2:
        raise ValueError("expected a (draws, observations) matrix")
    if not np.all(np.isfinite(loglik)):
        raise ValueError("log-likelihood values must be finite")
    S, N = loglik.shape

    log_w = -loglik
    log_w = log_w - log_w.max(axis=0)
    w = np.exp(log_w)
    cap = w.mean(axis=0) * np.sqrt(S)
    w = np.minimum(w, cap)
    w = w / w.sum(axis=0)

    elpd_i = logsumexp(loglik, b=w, axis=0)
    lppd_i = logsumexp(loglik, axis=0) - np.log(S)
    flagged = np.flatnonzero(w.max(axis=0) > 0.99).tolist()
    if flagged:
        logger.warning(f"{len(flagged)} observation(s) with degenerate importance weights")

    elpd = float(np.sum(elpd_i))
    se = float(np.sqrt(N * np.var(elpd_i))) if N > 1 else 0.0
    return LooResult(
        looic=-2.0 * elpd,
        elpd_loo=elpd,
        p_loo=float(np.sum(lppd_i) - elpd),
        se=2.0 * se,
        pointwise=(-2.0 * elpd_i).tolist(),
        flagged=flagged,
    )


def score_station(
    sp: StationPosterior,
    y_s: np.ndarray,
    years: Sequence[int],
    periods: Sequence[float],
    seed: int,
):
    """Scores of one station against its observed maxima."""
    y_s = np.asarray(y_s, dtype=float)
    replicates = posterior_predictive(sp, 1, seed=seed)[:, 0]
    observations = [
        ObservationScore(
            station_id=sp.station_id,
            year=int(year),
            y=float(y),
            pit=pit(replicates, y),
            crps=crps_sample(replicates, y),
        )
        for y, year in zip(y_s, years)
    ]
    rl = return_level_posterior(sp, periods)
    levels = [
        ReturnLevelScore(
            station_id=sp.station_id,
            R=R,
            mean=rl.mean[i],
            q05=rl.q05[i],
            q95=rl.q95[i],
            ciw=rl.width[i],
            empirical=empirical_quantile(y_s, 1.0 - 1.0 / R),
            pval=bayes_pval(rl.draws[i], y_s, R),
        )
        for i, R in enumerate(rl.periods)
    ]
    station = StationScore(
        station_id=sp.station_id,
        n_blocks=len(observations),
        acrps=acrps([o.crps for o in observations]),
    )
    return observations, station, levels


def build_report(
    model: str,
    posteriors: Sequence[StationPosterior],
    maxima: Dict[str, np.ndarray],
    years: Dict[str, np.ndarray],
    periods: Sequence[float],
    seed: int,
    loo: Optional[LooResult] = None,
) -> DiagnosticsReport:
    """Score every station; station ``i`` uses predictive seed ``seed + i``."""
    report = DiagnosticsReport(model=model, loo=loo)
    for i, sp in enumerate(posteriors):
        observations, station, levels = score_station(
            sp, maxima[sp.station_id], years[sp.station_id], periods, seed + i
        )
        report.observations.extend(observations)
        report.stations.append(station)
        report.return_levels.extend(levels)
    for R in periods:
        pvals = [level.pval for level in report.return_levels if level.R == float(R)]
        if pvals:
            report.pval_band[f"{float(R):g}"] = pval_band_summary(pvals)
    return report


def report_to_long_frame(report: DiagnosticsReport) -> pd.DataFrame:
    """Plot-ready long table: one row per (metric, station, key)."""
    rows: List[dict] = []
    for o in report.observations:
        rows.append({"model": report.model, "metric": "pit", "station_id": o.station_id, "key": str(o.year), "value": o.pit})
        rows.append({"model": report.model, "metric": "crps", "station_id": o.station_id, "key": str(o.year), "value": o.crps})
    for s in report.stations:
        rows.append({"model": report.model, "metric": "acrps", "station_id": s.station_id, "key": "", "value": s.acrps})
    for level in report.return_levels:
        key = f"{level.R:g}"
        rows.append({"model": report.model, "metric": "pval", "station_id": level.station_id, "key": key, "value": level.pval})
        rows.append({"model": report.model, "metric": "ciw", "station_id": level.station_id, "key": key, "value": level.ciw})
    return pd.DataFrame(rows, columns=["model", "metric", "station_id", "key", "value"])
