"""P-spline bases, the RW2 penalty and its mixed-model reparameterization."""

from typing import Tuple

import numpy as np
from scipy.interpolate import BSpline

from app.models.spline import DecomposedBasis, GroupDesign, KnotGrid, SplinePenalty
from app.utils.errors import DegenerateBasisError, InputValidationError, IngestErrorCode

DEGREE = 3
# eigenvalues below this fraction of the largest one are treated as zero
ZERO_EIG_REL = 1e-10


def make_knots(x: np.ndarray, n_interior: int) -> KnotGrid:
    x = np.asarray(x, dtype=float)
    if n_interior < 1:
        raise ValueError("at least one interior knot is required")
    if not np.all(np.isfinite(x)):
        raise ValueError("covariate values must be finite")
    lower, upper = float(np.min(x)), float(np.max(x))
    if np.unique(x).size < 2 or upper <= lower:
        raise InputValidationError(
            "cannot place knots on a constant covariate", IngestErrorCode.CONSTANT_COVARIATE
        )
    step = (upper - lower) / (n_interior + 1)
    # interior knots plus DEGREE extra knots beyond each end of the range
    knots = lower + step * np.arange(-DEGREE, n_interior + 2 + DEGREE)
    knots[DEGREE] = lower
    knots[DEGREE + n_interior + 1] = upper
    return KnotGrid(knots=knots, degree=DEGREE, lower=lower, upper=upper)


def clamp_to_span(x: np.ndarray, grid: KnotGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Clamp values into the grid's covariate range; returns (clamped, was_clamped)."""
    x = np.asarray(x, dtype=float)
    clamped = np.clip(x, grid.lower, grid.upper)
    return clamped, clamped != x


def bspline_basis(x: np.ndarray, grid: KnotGrid) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any((x < grid.lower) | (x > grid.upper)):
        raise ValueError(
            f"covariate values must lie in the knot span [{grid.lower}, {grid.upper}]"
        )
    return BSpline.design_matrix(x, grid.knots, grid.degree).toarray()


def rw2_precision(K: int) -> SplinePenalty:
    if K < 3:
        raise ValueError("a second-order random walk needs K >= 3")
    D2 = np.diff(np.eye(K), n=2, axis=0)
    return SplinePenalty(K_gamma=D2.T @ D2, rank=K - 2)


def _generalized_inverse(K_gamma: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(K_gamma)
    keep = w > ZERO_EIG_REL * w.max()
    return (V[:, keep] / w[keep]) @ V[:, keep].T


def decompose_penalty(B: np.ndarray, pen: SplinePenalty, x: np.ndarray) -> DecomposedBasis:
    B = np.asarray(B, dtype=float)
    x = np.asarray(x, dtype=float)
    S, K = B.shape
    if pen.K_gamma.shape != (K, K) or x.shape != (S,):
        raise ValueError(f"shape mismatch: B {B.shape}, penalty {pen.K_gamma.shape}, x {x.shape}")

    K_pinv = _generalized_inverse(pen.K_gamma)
    cov = B @ K_pinv @ B.T
    cov = 0.5 * (cov + cov.T)
    lam, U = np.linalg.eigh(cov)
    order = np.argsort(lam)[::-1]
    lam, U = lam[order], U[:, order]

    n_pen = pen.rank
    positive = lam > ZERO_EIG_REL * lam[0]
    if positive.sum() < n_pen:
        raise DegenerateBasisError(
            f"basis has {int(positive.sum())} positive directions, {n_pen} required "
            f"(S={S}, K={K}); use fewer basis functions"
        )
    lam_plus, U_plus = lam[:n_pen], U[:, :n_pen]
    projection = K_pinv @ B.T @ U_plus / np.sqrt(lam_plus)
    return DecomposedBasis(
        B=B,
        B_tilde=U_plus * np.sqrt(lam_plus),
        x_col=x,
        eigvals=lam_plus,
        U_plus=U_plus,
        K_pinv=K_pinv,
        projection=projection,
    )


def penalized_columns(dec: DecomposedBasis, B_new: np.ndarray) -> np.ndarray:
    """Penalized coordinates for new raw basis rows (reproduces B_tilde at training rows)."""
    return np.asarray(B_new, dtype=float) @ dec.projection


def build_group_design(dec: DecomposedBasis, m: int) -> GroupDesign:
    return GroupDesign(Z=np.column_stack([dec.x_col, dec.B_tilde]), group_id=m)
