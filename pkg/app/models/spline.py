import numpy as np
from pydantic import BaseModel, ConfigDict


class KnotGrid(BaseModel):
    """Equidistant cubic B-spline knots with extended boundary knots.

    ``lower``/``upper`` are the covariate range the grid was built on; the
    basis is a partition of unity on that interval.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    knots: np.ndarray
    degree: int = 3
    lower: float
    upper: float

    @property
    def n_basis(self) -> int:
        return len(self.knots) - self.degree - 1

    @property
    def n_interior(self) -> int:
        return self.n_basis - self.degree - 1


class SplinePenalty(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    K_gamma: np.ndarray
    rank: int


class DecomposedBasis(BaseModel):
    """Mixed-model split of one covariate's P-spline term.

    ``projection`` (K x (K-2)) maps any raw basis row to its penalized
    coordinates: B_tilde = B @ projection, at training and at new points alike.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    B: np.ndarray
    B_tilde: np.ndarray
    x_col: np.ndarray
    eigvals: np.ndarray
    U_plus: np.ndarray
    K_pinv: np.ndarray
    projection: np.ndarray


class GroupDesign(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    Z: np.ndarray
    group_id: int
