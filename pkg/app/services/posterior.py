"""Station-level posteriors, ungauged prediction and derived summaries."""

from typing import Optional, Sequence

import jax
import jax.numpy as jnp
import numpy as np
import pandas as pd
from jax.scipy import stats as jstats

from app.models.dataset import THETAS, Dataset, PriorCalibration, StandardizationRecord
from app.models.gev import GevParams
from app.models.posterior import PosteriorDraws, ReturnLevelPosterior, StationFit, StationPosterior
from app.models.spec import ModelDesign, ModelSpec, SamplerConfig
from app.services.gev import (
    LOG_ZERO,
    gev_mean_array,
    gev_quantile_array,
    inverse_link_array,
    link_params,
    return_level_array,
)
from app.services.model import (
    GevRegressionModel,
    design_for_new_rows,
    gev_loglik_terms,
    group_effects,
    linked_predictors,
    natural_coefficients,
)
from app.services.sampler_service import SamplerService
from app.utils.errors import DegenerateCalibrationError, InputValidationError
from app.utils.logging import logger

MIN_STATION_LENGTH = 5
# weak priors of the exploratory fit: mu, log sigma ~ N(0, 1e4^2), xi ~ N(0, 1)
STATION_PRIOR_SCALE = 1.0e4
XI_CLAMP = 0.499


def _station_log_density(y: jnp.ndarray):
    def log_density(z):
        mu, log_sigma, xi = z[0], z[1], z[2]
        lp_obs, inside = gev_loglik_terms(y, mu, jnp.exp(log_sigma), xi)
        prior = (
            jstats.norm.logpdf(mu, 0.0, STATION_PRIOR_SCALE)
            + jstats.norm.logpdf(log_sigma, 0.0, STATION_PRIOR_SCALE)
            + jstats.norm.logpdf(xi)
        )
        total = jnp.sum(jnp.where(inside, lp_obs, 0.0)) + prior
        return jnp.where(jnp.all(inside), total, LOG_ZERO)

    return log_density


def fit_station_gev(y_s: np.ndarray, cfg: SamplerConfig, station_id: str = "") -> StationFit:
    """Bayesian GEV fit of one station's maxima with weak independent priors."""
    y_s = np.asarray(y_s, dtype=float)
    if y_s.size < MIN_STATION_LENGTH:
        raise InputValidationError(
            f"station '{station_id}' has {y_s.size} maxima, at least {MIN_STATION_LENGTH} required"
        )
    # Gumbel moment estimates as the starting point
    sigma0 = max(float(np.std(y_s, ddof=1)) * np.sqrt(6.0) / np.pi, 1e-6 * max(abs(float(np.mean(y_s))), 1.0))
    mu0 = float(np.mean(y_s)) - np.euler_gamma * sigma0
    base = np.array([mu0, np.log(sigma0), 0.0])
    jitter = np.array([0.1 * sigma0, 0.1, 0.1])

    draws = SamplerService(cfg).run(_station_log_density(jnp.asarray(y_s)), base, jitter)
    flat = draws.flat()
    return StationFit(
        station_id=station_id,
        n_obs=int(y_s.size),
        mu=flat[:, 0],
        sigma=np.exp(flat[:, 1]),
        xi=flat[:, 2],
        divergences=draws.divergence_count,
    )


def calibrate_priors(fits: Sequence[StationFit]) -> PriorCalibration:
    """Mean and sd of the linked posterior-mean triples across stations.

    A station whose mean shape falls outside (-0.5, 0.5) is clamped to
    +-0.499 before linking; a station with nonpositive mean location cannot be
    linked and is left out. Both are listed in ``clamped_stations``.
    """
    if len(fits) < 2:
        raise InputValidationError("prior calibration needs at least two station fits")
    linked, flagged = {}, []
    for fit in fits:
        if fit.mu_hat <= 0:
            logger.warning(f"station {fit.station_id}: mean location {fit.mu_hat:.4g} <= 0, left out of calibration")
            flagged.append(fit.station_id)
            continue
        xi_hat = fit.xi_hat
        if not -0.5 < xi_hat < 0.5:
            logger.warning(f"station {fit.station_id}: mean shape {xi_hat:.4f} clamped to the link domain")
            flagged.append(fit.station_id)
            xi_hat = float(np.clip(xi_hat, -XI_CLAMP, XI_CLAMP))
        params = link_params(GevParams(mu=fit.mu_hat, sigma=fit.sigma_hat, xi=xi_hat))
        linked[fit.station_id] = (params.psi, params.tau, params.phi)
    if len(linked) < 2:
        raise DegenerateCalibrationError("fewer than two stations could be linked")

    values = np.array(list(linked.values()))
    m_hat = values.mean(axis=0)
    s_hat = values.std(axis=0, ddof=1)
    if np.any(s_hat <= 0):
        degenerate = [THETAS[i] for i in np.flatnonzero(s_hat <= 0)]
        raise DegenerateCalibrationError(f"zero spread of station estimates for {degenerate}")
    return PriorCalibration(
        m_hat=tuple(float(v) for v in m_hat),
        s_hat=tuple(float(v) for v in s_hat),
        clamped_stations=flagged,
        linked_estimates=linked,
    )


def _station_posterior_from_linked(theta: np.ndarray, spec: ModelSpec, **fields) -> StationPosterior:
    mu, sigma, xi = inverse_link_array(theta[:, 0], theta[:, 1], theta[:, 2], spec.shape_link)
    return StationPosterior(mu=mu, sigma=sigma, xi=xi, **fields)


def station_params(
    draws: PosteriorDraws,
    spec: ModelSpec,
    design: ModelDesign,
    s: int,
    station_id: Optional[str] = None,
) -> StationPosterior:
    if not 0 <= s < design.X.shape[0]:
        raise IndexError(f"station index {s} outside the training set")
    theta = np.asarray(
        linked_predictors(spec, draws.layout, draws.flat(), design.X, design.B_tilde, design.Z)
    )[:, :, s]
    return _station_posterior_from_linked(
        theta, spec, station_id=station_id if station_id is not None else str(s), gauged=True
    )


def predict_ungauged(
    draws: PosteriorDraws,
    spec: ModelSpec,
    design: ModelDesign,
    x_new: np.ndarray,
    seed: int = 0,
    standardization: Optional[StandardizationRecord] = None,
    station_id: str = "ungauged",
    zero_random_effect: bool = False,
) -> StationPosterior:
    """Predictive GEV parameters at a new site.

    ``x_new`` is a standardized covariate row, or a raw one when
    ``standardization`` is given. One random effect per draw is simulated from
    N(0, kappa^2); the fitted station effects are never used.
    """
    x_row = np.atleast_2d(np.asarray(x_new, dtype=float))
    if x_row.shape != (1, spec.M):
        raise ValueError(f"expected one row of {spec.M} covariates, got shape {x_row.shape}")
    if standardization is not None:
        x_row = standardization.apply(x_row)
    new_design = design_for_new_rows(spec, design, x_row)
    clamped = [spec.covariates[m] for m in np.flatnonzero(new_design.clamped[0])]

    flat = draws.flat()
    coefs = natural_coefficients(spec, draws.layout, flat)
    kappa = np.stack([np.asarray(coefs[theta]["kappa"]) for theta in THETAS], axis=-1)
    if zero_random_effect:
        u_tilde = np.zeros_like(kappa)
    else:
        rng = np.random.default_rng(seed)
        u_tilde = kappa * rng.standard_normal(kappa.shape)
    theta = np.asarray(
        linked_predictors(
            spec,
            draws.layout,
            flat,
            new_design.X,
            new_design.B_tilde,
            new_design.Z,
            u_override=jnp.asarray(u_tilde)[..., None],
        )
    )[:, :, 0]
    return _station_posterior_from_linked(
        theta, spec, station_id=station_id, gauged=False, u_tilde=u_tilde, clamped=clamped
    )


def _summaries(values: np.ndarray):
    q05, q50, q95 = np.quantile(values, [0.05, 0.5, 0.95], axis=-1)
    return values.mean(axis=-1), q05, q50, q95


def return_level_posterior(sp: StationPosterior, periods: Sequence[float]) -> ReturnLevelPosterior:
    periods = [float(R) for R in periods]
    if not periods:
        raise ValueError("at least one return period is required")
    R = np.asarray(periods)[:, None]
    draws = return_level_array(R, sp.mu[None, :], sp.sigma[None, :], sp.xi[None, :])
    mean, q05, q50, q95 = _summaries(draws)
    return ReturnLevelPosterior(
        station_id=sp.station_id,
        periods=periods,
        draws=draws,
        mean=mean.tolist(),
        q05=q05.tolist(),
        q50=q50.tolist(),
        q95=q95.tolist(),
    )


def posterior_predictive(sp: StationPosterior, T: int, seed: int = 0) -> np.ndarray:
    """One replicate series of length T per posterior draw, shape (B, T)."""
    if T < 1:
        raise ValueError("T must be at least 1")
    rng = np.random.default_rng(seed)
    u = rng.uniform(np.finfo(float).tiny, 1.0, size=(sp.n_draws, T))
    return gev_quantile_array(u, sp.mu[:, None], sp.sigma[:, None], sp.xi[:, None])


def predictive_mean(sp: StationPosterior) -> float:
    """Mixture of the analytic GEV means over draws."""
    return float(np.mean(gev_mean_array(sp.mu, sp.sigma, sp.xi)))


def pointwise_log_likelihood(
    draws: PosteriorDraws, spec: ModelSpec, design: ModelDesign, dataset: Dataset
) -> np.ndarray:
    """Log-density of every observation under every draw, shape (B, N)."""
    model = GevRegressionModel(spec, dataset, design)

    def terms(values):
        lp, inside = model.log_likelihood_terms(values)
        return jnp.where(inside, lp, -jnp.inf)

    return np.asarray(jax.lax.map(terms, jnp.asarray(draws.flat())))


def random_effect_scales(draws: PosteriorDraws, spec: ModelSpec) -> pd.DataFrame:
    coefs = natural_coefficients(spec, draws.layout, draws.flat())
    rows = []
    for theta in THETAS:
        kappa = np.asarray(coefs[theta]["kappa"])
        lo, hi = np.quantile(kappa, [0.025, 0.975])
        rows.append(
            {"model": spec.family.value, "theta": theta, "mean": float(kappa.mean()), "q025": float(lo), "q975": float(hi)}
        )
    return pd.DataFrame(rows)


def covariate_effects(
    draws: PosteriorDraws,
    spec: ModelSpec,
    design: ModelDesign,
    covariate: str,
    grid_size: int = 50,
) -> pd.DataFrame:
    """Fitted effect of one covariate over a grid spanning its training range."""
    if covariate not in spec.covariates:
        raise KeyError(f"unknown covariate '{covariate}'")
    m = spec.covariates.index(covariate)
    grid = np.linspace(design.lower[m], design.upper[m], grid_size)
    rows = np.zeros((grid_size, spec.M))
    rows[:, m] = grid
    # the other columns sit at their standardized mean (0); only column m is read
    rows = np.clip(rows, design.lower, design.upper)
    grid_design = design_for_new_rows(spec, design, rows)
    effects = group_effects(spec, draws.layout, draws.flat(), grid_design)[:, :, m, :]
    frames = []
    for i, theta in enumerate(THETAS):
        mean, q05, q50, q95 = _summaries(effects[:, i, :].T)
        frames.append(
            pd.DataFrame(
                {
                    "model": spec.family.value,
                    "theta": theta,
                    "covariate": covariate,
                    "x": grid,
                    "mean": mean,
                    "q05": q05,
                    "q95": q95,
                }
            )
        )
    return pd.concat(frames, ignore_index=True)


def group_effect_norms(draws: PosteriorDraws, spec: ModelSpec, design: ModelDesign) -> pd.DataFrame:
    """Posterior mean L2 norm of each covariate's fitted effect over the training stations."""
    effects = group_effects(spec, draws.layout, draws.flat(), design)
    norms = np.linalg.norm(effects, axis=-1).mean(axis=0)
    return pd.DataFrame(
        [
            {"model": spec.family.value, "theta": theta, "covariate": name, "norm": float(norms[i, m])}
            for i, theta in enumerate(THETAS)
            for m, name in enumerate(spec.covariates)
        ]
    )


def return_level_curve(
    sp: StationPosterior, periods: Sequence[float], observed: Optional[np.ndarray] = None
) -> pd.DataFrame:
    """Return-level band over ``periods`` plus Weibull plotting positions of the observed maxima."""
    rl = return_level_posterior(sp, periods)
    frame = pd.DataFrame(
        {"kind": "model", "R": rl.periods, "level": rl.mean, "q05": rl.q05, "q95": rl.q95}
    )
    if observed is None or len(observed) == 0:
        return frame
    y = np.sort(np.asarray(observed, dtype=float))
    p = np.arange(1, y.size + 1) / (y.size + 1)
    empirical = pd.DataFrame({"kind": "observed", "R": 1.0 / (1.0 - p), "level": y})
    return pd.concat([frame, empirical], ignore_index=True)


def intercept_means(draws: PosteriorDraws) -> dict:
    return {theta: float(draws.block(f"beta0_{theta}").mean()) for theta in THETAS}

