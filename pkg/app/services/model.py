"""Predictors and log-joint density of the Linear, Splines and Splines-HS families.

Every hierarchical coefficient is stored non-centered: the parameter vector
holds standard-normal draws (``u_*``, ``gamma_*``, ``alpha_*``) and the scales
(kappa, omega, eta, lambda, delta) on the log scale. The prior density of a
standardized block is N(0, 1), which already contains the log-Jacobian of the
non-centered transform; log-scale parameters add log(scale) as their Jacobian.
"""

from functools import partial
from typing import Dict, Sequence, Tuple

import jax
import jax.numpy as jnp
import numpy as np
from jax.scipy import stats as jstats

from app.models.dataset import THETAS, Dataset
from app.models.spec import Block, ModelDesign, ModelFamily, ModelSpec, ParamLayout, ParamVector
from app.services.gev import LOG_ZERO, SHAPE_TOL
from app.services.splines import (
    bspline_basis,
    build_group_design,
    clamp_to_span,
    decompose_penalty,
    make_knots,
    penalized_columns,
    rw2_precision,
)
from app.utils.logging import logger


def build_layout(spec: ModelSpec, S: int) -> ParamLayout:
    blocks: Dict[str, Block] = {}
    position = 0

    def add(name: str, shape: Tuple[int, ...]) -> None:
        nonlocal position
        size = int(np.prod(shape))
        blocks[name] = Block(start=position, stop=position + size, shape=shape)
        position += size

    M, K = spec.M, spec.n_basis
    for theta in THETAS:
        add(f"beta0_{theta}", (1,))
        if spec.family == ModelFamily.LINEAR:
            add(f"beta_{theta}", (M,))
        elif spec.family == ModelFamily.SPLINES:
            add(f"beta_{theta}", (M,))
            add(f"gamma_{theta}", (M, K - 2))
            add(f"log_omega_{theta}", (M,))
        else:
            add(f"alpha_{theta}", (M, K - 1))
            add(f"log_delta_{theta}", (M, K - 1))
            add(f"log_lambda_{theta}", (M,))
            add(f"log_eta_{theta}", (1,))
        add(f"u_{theta}", (S,))
        add(f"log_kappa_{theta}", (1,))
    return ParamLayout(blocks=blocks)


def build_design(spec: ModelSpec, X: np.ndarray) -> ModelDesign:
    """Training design: knots, bases and mixed-model split per covariate."""
    X = np.asarray(X, dtype=float)
    S, M = X.shape
    if M != spec.M:
        raise ValueError(f"spec lists {spec.M} covariates, X has {M}")
    K = spec.n_basis
    lower = X.min(axis=0) if M else np.zeros(0)
    upper = X.max(axis=0) if M else np.zeros(0)
    if not spec.uses_splines:
        return ModelDesign(
            X=X,
            B_tilde=np.zeros((M, S, 0)),
            Z=np.zeros((M, S, 0)),
            lower=lower,
            upper=upper,
        )

    penalty = rw2_precision(K)
    grids, bases, b_tilde, groups = [], [], [], []
    for m in range(M):
        grid = make_knots(X[:, m], K - 4)
        dec = decompose_penalty(bspline_basis(X[:, m], grid), penalty, X[:, m])
        grids.append(grid)
        bases.append(dec)
        b_tilde.append(dec.B_tilde)
        groups.append(build_group_design(dec, m).Z)
    return ModelDesign(
        X=X,
        B_tilde=np.stack(b_tilde) if M else np.zeros((0, S, K - 2)),
        Z=np.stack(groups) if M else np.zeros((0, S, K - 1)),
        lower=lower,
        upper=upper,
        grids=grids,
        bases=bases,
    )


def design_for_new_rows(spec: ModelSpec, design: ModelDesign, X_new: np.ndarray) -> ModelDesign:
    """Project standardized covariate rows through the training design.

    Values outside the training range are clamped onto it and flagged in
    ``clamped``.
    """
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    clamped_X = np.clip(X_new, design.lower, design.upper)
    clamped = clamped_X != X_new
    if clamped.any():
        logger.warning(f"{int(clamped.sum())} covariate value(s) clamped to the training range")
    S_new, M = clamped_X.shape
    if not spec.uses_splines:
        return design.model_copy(
            update=dict(
                X=clamped_X,
                B_tilde=np.zeros((M, S_new, 0)),
                Z=np.zeros((M, S_new, 0)),
                clamped=clamped,
            )
        )
    b_tilde, groups = [], []
    for m, (grid, dec) in enumerate(zip(design.grids, design.bases)):
        x_m, _ = clamp_to_span(clamped_X[:, m], grid)
        columns = penalized_columns(dec, bspline_basis(x_m, grid))
        b_tilde.append(columns)
        groups.append(np.column_stack([x_m, columns]))
    K = spec.n_basis
    return design.model_copy(
        update=dict(
            X=clamped_X,
            B_tilde=np.stack(b_tilde) if M else np.zeros((0, S_new, K - 2)),
            Z=np.stack(groups) if M else np.zeros((0, S_new, K - 1)),
            clamped=clamped,
        )
    )


def natural_coefficients(spec: ModelSpec, layout: ParamLayout, values) -> Dict[str, Dict[str, jnp.ndarray]]:
    """Natural-scale blocks per theta. Leading batch axes (draws) are kept."""
    values = jnp.asarray(values)
    out = {}
    for theta in THETAS:
        get = partial(layout.get, values)
        coefs = {"beta0": get(f"beta0_{theta}")[..., 0]}
        kappa = jnp.exp(get(f"log_kappa_{theta}")[..., 0])
        coefs["kappa"] = kappa
        coefs["u"] = kappa[..., None] * get(f"u_{theta}")
        if spec.family == ModelFamily.LINEAR:
            coefs["beta"] = get(f"beta_{theta}")
        elif spec.family == ModelFamily.SPLINES:
            omega = jnp.exp(get(f"log_omega_{theta}"))
            coefs["beta"] = get(f"beta_{theta}")
            coefs["omega"] = omega
            coefs["gamma"] = omega[..., None] * get(f"gamma_{theta}")
        else:
            eta = jnp.exp(get(f"log_eta_{theta}")[..., 0])
            lam = jnp.exp(get(f"log_lambda_{theta}"))
            delta = jnp.exp(get(f"log_delta_{theta}"))
            # literal covariance eta^2 lambda^2 diag[delta]: delta enters unsquared
            scale = eta[..., None, None] * lam[..., None] * jnp.sqrt(delta)
            coefs["eta"], coefs["lambda"], coefs["delta"] = eta, lam, delta
            coefs["alpha"] = scale * get(f"alpha_{theta}")
        out[theta] = coefs
    return out


def fixed_effects(family: ModelFamily, coefs: Dict[str, jnp.ndarray], X, B_tilde, Z) -> jnp.ndarray:
    """Covariate part of one theta-equation, shape (..., S)."""
    if family == ModelFamily.LINEAR:
        return jnp.einsum("sm,...m->...s", X, coefs["beta"])
    if family == ModelFamily.SPLINES:
        return jnp.einsum("sm,...m->...s", X, coefs["beta"]) + jnp.einsum(
            "msk,...mk->...s", B_tilde, coefs["gamma"]
        )
    return jnp.einsum("msk,...mk->...s", Z, coefs["alpha"])


def linked_predictors(spec: ModelSpec, layout: ParamLayout, values, X, B_tilde, Z, u_override=None) -> jnp.ndarray:
    """Stacked (psi, tau, phi) predictors, shape (..., 3, S).

    ``u_override`` (shape (..., 3, S)) replaces the fitted random effects,
    which is how ungauged stations get freshly simulated ones.
    """
    coefs = natural_coefficients(spec, layout, values)
    rows = []
    for i, theta in enumerate(THETAS):
        c = coefs[theta]
        u = c["u"] if u_override is None else u_override[..., i, :]
        rows.append(c["beta0"][..., None] + fixed_effects(spec.family, c, X, B_tilde, Z) + u)
    return jnp.stack(rows, axis=-2)


def assemble_predictor(spec: ModelSpec, params: ParamVector, design: ModelDesign) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    theta = linked_predictors(spec, params.layout, params.values, design.X, design.B_tilde, design.Z)
    theta = np.asarray(theta)
    if theta.shape[-1] != design.X.shape[0]:
        raise ValueError("random-effect block does not match the number of design rows")
    return theta[0], theta[1], theta[2]


def shape_link_inverse_jnp(phi, spec: ModelSpec):
    c = spec.shape_link
    base = -jnp.expm1(-jnp.exp((phi - c.a_phi) / c.b_phi))
    xi = base ** (1.0 / c.c_phi) - 0.5
    return jnp.clip(xi, np.nextafter(-0.5, 0.0), np.nextafter(0.5, 0.0))


def gev_loglik_terms(y, mu, sigma, xi):
    """Pointwise GEV log-density and support indicator, safe for autodiff."""
    z = (y - mu) / sigma
    gumbel = jnp.abs(xi) < SHAPE_TOL
    xi_safe = jnp.where(gumbel, 1.0, xi)
    xz = xi_safe * z
    inside = gumbel | (xz > -1.0)
    log_t = jnp.log1p(jnp.where(xz > -1.0, xz, 0.0))
    general = -jnp.log(sigma) - (1.0 + 1.0 / xi_safe) * log_t - jnp.exp(-log_t / xi_safe)
    z_g = jnp.where(gumbel, z, 0.0)
    gumbel_lp = -jnp.log(sigma) - z_g - jnp.exp(-z_g)
    return jnp.where(gumbel, gumbel_lp, general), inside


def half_normal_logpdf(x, scale):
    return jnp.log(2.0) + jstats.norm.logpdf(x, 0.0, scale)


def half_cauchy_logpdf(x, scale):
    return jnp.log(2.0 / (jnp.pi * scale)) - jnp.log1p((x / scale) ** 2)


def log_prior(spec: ModelSpec, layout: ParamLayout, values) -> jnp.ndarray:
    get = partial(layout.get, values)
    lp = 0.0
    for i, theta in enumerate(THETAS):
        m_hat, s_hat = spec.calib.m_hat[i], spec.calib.s_hat[i]
        lp += jnp.sum(jstats.norm.logpdf(get(f"beta0_{theta}"), m_hat, 2.0 * s_hat))

        lp += jnp.sum(jstats.norm.logpdf(get(f"u_{theta}")))
        log_kappa = get(f"log_kappa_{theta}")
        lp += jnp.sum(half_normal_logpdf(jnp.exp(log_kappa), spec.hyper_scale) + log_kappa)

        if spec.family in (ModelFamily.LINEAR, ModelFamily.SPLINES):
            lp += jnp.sum(jstats.norm.logpdf(get(f"beta_{theta}"), 0.0, spec.coef_scale))

        if spec.family == ModelFamily.SPLINES:
            lp += jnp.sum(jstats.norm.logpdf(get(f"gamma_{theta}")))
            log_omega = get(f"log_omega_{theta}")
            lp += jnp.sum(half_normal_logpdf(jnp.exp(log_omega), spec.hyper_scale) + log_omega)

        if spec.family == ModelFamily.SPLINES_HS:
            lp += jnp.sum(jstats.norm.logpdf(get(f"alpha_{theta}")))
            for name in (f"log_delta_{theta}", f"log_lambda_{theta}"):
                log_scale = get(name)
                lp += jnp.sum(half_cauchy_logpdf(jnp.exp(log_scale), 1.0) + log_scale)
            log_eta = get(f"log_eta_{theta}")
            lp += jnp.sum(half_cauchy_logpdf(jnp.exp(log_eta), s_hat) + log_eta)
    return lp


class GevRegressionModel:
    """Log-joint of one model family on one dataset, with jitted value and gradient."""

    def __init__(self, spec: ModelSpec, dataset: Dataset, design: ModelDesign):
        if design.X.shape[0] != dataset.S:
            raise ValueError("design rows do not match the dataset stations")
        self.spec = spec
        self.dataset = dataset
        self.design = design
        self.layout = build_layout(spec, dataset.S)
        self._y = jnp.asarray(dataset.y)
        self._index = jnp.asarray(dataset.station_index)
        self._X = jnp.asarray(design.X)
        self._B_tilde = jnp.asarray(design.B_tilde)
        self._Z = jnp.asarray(design.Z)
        self._value = jax.jit(self.log_density)
        self._grad = jax.jit(jax.grad(self.log_density))

    @property
    def dim(self) -> int:
        return self.layout.dim

    def log_likelihood_terms(self, values):
        theta = linked_predictors(self.spec, self.layout, values, self._X, self._B_tilde, self._Z)
        psi, tau, phi = theta[0], theta[1], theta[2]
        mu = jnp.exp(psi)[self._index]
        sigma = jnp.exp(psi + tau)[self._index]
        xi = shape_link_inverse_jnp(phi, self.spec)[self._index]
        return gev_loglik_terms(self._y, mu, sigma, xi)

    def log_density(self, values):
        """Traceable log-joint; the finite log-zero replaces it outside the support."""
        lp_obs, inside = self.log_likelihood_terms(values)
        total = jnp.sum(jnp.where(inside, lp_obs, 0.0)) + log_prior(self.spec, self.layout, values)
        return jnp.where(jnp.all(inside), total, LOG_ZERO)

    def log_joint(self, values) -> float:
        return float(self._value(jnp.asarray(values, dtype=float)))

    def grad(self, values) -> np.ndarray:
        return np.asarray(self._grad(jnp.asarray(values, dtype=float)))

    def base_position(self) -> np.ndarray:
        """Intercepts at the calibrated means, every other coordinate at zero.

        The sampler jitters the non-intercept coordinates uniformly around
        this point (half-width ``SamplerConfig.initial_jitter``).
        """
        values = np.zeros(self.dim)
        for i, theta in enumerate(THETAS):
            block = self.layout.blocks[f"beta0_{theta}"]
            values[block.start] = self.spec.calib.m_hat[i]
        return values

    def jitter_mask(self) -> np.ndarray:
        """Coordinates that receive initial jitter (everything but the intercepts)."""
        mask = np.ones(self.dim, dtype=bool)
        for theta in THETAS:
            mask[self.layout.blocks[f"beta0_{theta}"].start] = False
        return mask


def log_joint(spec: ModelSpec, params: ParamVector, data: Dataset, design: ModelDesign) -> float:
    return GevRegressionModel(spec, data, design).log_joint(params.values)


def log_joint_grad(spec: ModelSpec, params: ParamVector, data: Dataset, design: ModelDesign) -> np.ndarray:
    return GevRegressionModel(spec, data, design).grad(params.values)


def group_effects(spec: ModelSpec, layout: ParamLayout, draws: np.ndarray, design: ModelDesign) -> np.ndarray:
    """Per-covariate fitted effects over the design rows, shape (B, 3, M, S)."""
    coefs = natural_coefficients(spec, layout, draws)
    X, Bt, Z = (jnp.asarray(a) for a in (design.X, design.B_tilde, design.Z))
    rows = []
    for theta in THETAS:
        c = coefs[theta]
        if spec.family == ModelFamily.LINEAR:
            effect = jnp.einsum("sm,...m->...ms", X, c["beta"])
        elif spec.family == ModelFamily.SPLINES:
            effect = jnp.einsum("sm,...m->...ms", X, c["beta"]) + jnp.einsum(
                "msk,...mk->...ms", Bt, c["gamma"]
            )
        else:
            effect = jnp.einsum("msk,...mk->...ms", Z, c["alpha"])
        rows.append(effect)
    return np.asarray(jnp.stack(rows, axis=-3))


def theta_names() -> Sequence[str]:
    return THETAS
