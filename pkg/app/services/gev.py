"""GEV distribution primitives and the multivariate link (psi, tau, phi).

The user-facing functions take a ``GevParams`` and return plain floats; the
``*_array`` helpers broadcast over numpy arrays of parameters and are what the
posterior code uses drawwise.

Return levels are computed as the exact inverse of the GEV cdf. The closed
form printed in some references, mu - sigma/xi [1 + log(1 - 1/R)^(-xi)], does
not invert the cdf and is not used.
"""

from typing import Optional

import numpy as np
from scipy import special

from app.models.gev import (
    DEFAULT_SHAPE_LINK,
    GevParams,
    LinkedParams,
    ReturnPeriod,
    ShapeLinkConstants,
)

# Below this |xi| the Gumbel branch is used.
SHAPE_TOL = 1e-8

# Finite log-zero used inside the sampler; -inf is reported to users.
LOG_ZERO = -1e300

_XI_MIN = np.nextafter(-0.5, 0.0)
_XI_MAX = np.nextafter(0.5, 0.0)


def _require_finite(*values) -> None:
    for value in values:
        if not np.all(np.isfinite(value)):
            raise ValueError("GEV inputs must be finite")


def gev_cdf_array(y, mu, sigma, xi) -> np.ndarray:
    y, mu, sigma, xi = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (y, mu, sigma, xi)))
    z = (y - mu) / sigma
    gumbel = np.abs(xi) < SHAPE_TOL
    xi_safe = np.where(gumbel, 1.0, xi)
    t = 1.0 + xi_safe * z
    inside = t > 0
    t_safe = np.where(inside, t, 1.0)
    frechet_weibull = np.exp(-np.exp(-np.log(t_safe) / xi_safe))
    # [.]_+ truncation: below the lower endpoint (xi > 0) -> 0, above the upper one (xi < 0) -> 1
    outside_value = np.where(xi_safe > 0, 0.0, 1.0)
    general = np.where(inside, frechet_weibull, outside_value)
    return np.where(gumbel, np.exp(-np.exp(-z)), general)


def gev_logpdf_array(y, mu, sigma, xi, log_zero: float = -np.inf) -> np.ndarray:
    y, mu, sigma, xi = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (y, mu, sigma, xi)))
    z = (y - mu) / sigma
    gumbel = np.abs(xi) < SHAPE_TOL
    xi_safe = np.where(gumbel, 1.0, xi)
    xz = xi_safe * z
    inside = xz > -1.0
    log_t = np.log1p(np.where(inside, xz, 0.0))
    general = -np.log(sigma) - (1.0 + 1.0 / xi_safe) * log_t - np.exp(-log_t / xi_safe)
    general = np.where(inside, general, log_zero)
    return np.where(gumbel, -np.log(sigma) - z - np.exp(-z), general)


def _quantile_from_gumbel_scale(y_p, mu, sigma, xi) -> np.ndarray:
    """GEV quantile written in terms of y_p = -log(F)."""
    y_p, mu, sigma, xi = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (y_p, mu, sigma, xi)))
    gumbel = np.abs(xi) < SHAPE_TOL
    xi_safe = np.where(gumbel, 1.0, xi)
    general = mu + sigma / xi_safe * np.expm1(-xi_safe * np.log(y_p))
    return np.where(gumbel, mu - sigma * np.log(y_p), general)


def gev_quantile_array(prob, mu, sigma, xi) -> np.ndarray:
    """Inverse cdf at non-exceedance probability ``prob``."""
    return _quantile_from_gumbel_scale(-np.log(np.asarray(prob, dtype=float)), mu, sigma, xi)


def return_level_array(R, mu, sigma, xi) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if np.any(R <= 1):
        raise ValueError("return period must exceed one block")
    # -log(1 - 1/R) evaluated without cancellation
    return _quantile_from_gumbel_scale(-np.log1p(-1.0 / R), mu, sigma, xi)


def gev_mean_array(mu, sigma, xi) -> np.ndarray:
    """Analytic GEV mean; infinite for xi >= 1."""
    mu, sigma, xi = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (mu, sigma, xi)))
    gumbel = np.abs(xi) < SHAPE_TOL
    xi_safe = np.where(gumbel, 0.5, xi)
    general = np.where(
        xi_safe < 1.0,
        mu + sigma * (special.gamma(1.0 - xi_safe) - 1.0) / xi_safe,
        np.inf,
    )
    return np.where(gumbel, mu + sigma * np.euler_gamma, general)


def gev_cdf(y: float, params: GevParams) -> float:
    _require_finite(y)
    return float(gev_cdf_array(y, params.mu, params.sigma, params.xi))


def gev_logpdf(y: float, params: GevParams, log_zero: float = -np.inf) -> float:
    _require_finite(y)
    return float(gev_logpdf_array(y, params.mu, params.sigma, params.xi, log_zero=log_zero))


def return_level(rp: ReturnPeriod, params: GevParams) -> float:
    return float(return_level_array(rp.R, params.mu, params.sigma, params.xi))


def gev_sample(params: GevParams, n: int, rng_seed: Optional[int] = None) -> np.ndarray:
    if n < 0:
        raise ValueError("sample size must be non-negative")
    if n == 0:
        return np.empty(0)
    rng = np.random.default_rng(rng_seed)
    # open interval so the inverse cdf never hits +-inf
    u = rng.uniform(np.finfo(float).tiny, 1.0, size=n)
    return gev_quantile_array(u, params.mu, params.sigma, params.xi)


def shape_link_array(xi, c: ShapeLinkConstants = DEFAULT_SHAPE_LINK) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    _require_finite(xi)
    if np.any((xi <= -0.5) | (xi >= 0.5)):
        raise ValueError("shape must lie in the open interval (-0.5, 0.5)")
    return c.a_phi + c.b_phi * np.log(-np.log1p(-((xi + 0.5) ** c.c_phi)))


def shape_link_inverse_array(phi, c: ShapeLinkConstants = DEFAULT_SHAPE_LINK) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    _require_finite(phi)
    base = -np.expm1(-np.exp((phi - c.a_phi) / c.b_phi))
    xi = base ** (1.0 / c.c_phi) - 0.5
    return np.clip(xi, _XI_MIN, _XI_MAX)


def shape_link(xi: float, c: ShapeLinkConstants = DEFAULT_SHAPE_LINK) -> float:
    return float(shape_link_array(xi, c))


def shape_link_inverse(phi: float, c: ShapeLinkConstants = DEFAULT_SHAPE_LINK) -> float:
    return float(shape_link_inverse_array(phi, c))


def link_params(p: GevParams, c: ShapeLinkConstants = DEFAULT_SHAPE_LINK) -> LinkedParams:
    if p.mu <= 0:
        raise ValueError(f"log link requires mu > 0, got {p.mu}")
    return LinkedParams(
        psi=float(np.log(p.mu)),
        tau=float(np.log(p.sigma / p.mu)),
        phi=shape_link(p.xi, c),
    )


def inverse_link_params(l: LinkedParams, c: ShapeLinkConstants = DEFAULT_SHAPE_LINK) -> GevParams:
    return GevParams(
        mu=float(np.exp(l.psi)),
        sigma=float(np.exp(l.psi + l.tau)),
        xi=shape_link_inverse(l.phi, c),
    )


def inverse_link_array(psi, tau, phi, c: ShapeLinkConstants = DEFAULT_SHAPE_LINK):
    """Drawwise inverse link; returns (mu, sigma, xi) arrays."""
    psi = np.asarray(psi, dtype=float)
    tau = np.asarray(tau, dtype=float)
    return np.exp(psi), np.exp(psi + tau), shape_link_inverse_array(phi, c)
