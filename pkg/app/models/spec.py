from enum import Enum
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.models.dataset import PriorCalibration
from app.models.gev import DEFAULT_SHAPE_LINK, ShapeLinkConstants


class ModelFamily(str, Enum):
    LINEAR = "linear"
    SPLINES = "splines"
    SPLINES_HS = "splines-hs"


class ModelSpec(BaseModel):
    family: ModelFamily
    n_basis: int = Field(default=20, ge=5, description="K, cubic B-spline basis size per covariate")
    calib: PriorCalibration
    covariates: List[str]
    coef_scale: float = Field(default=2.0, gt=0)
    hyper_scale: float = Field(default=2.0, gt=0)
    shape_link: ShapeLinkConstants = DEFAULT_SHAPE_LINK

    @property
    def M(self) -> int:
        return len(self.covariates)

    @property
    def uses_splines(self) -> bool:
        return self.family != ModelFamily.LINEAR


class Block(BaseModel):
    start: int
    stop: int
    shape: Tuple[int, ...]


class ParamLayout(BaseModel):
    """Name -> slice map over the flat unconstrained parameter vector."""

    blocks: Dict[str, Block]

    @property
    def dim(self) -> int:
        return max((b.stop for b in self.blocks.values()), default=0)

    def names(self) -> List[str]:
        return list(self.blocks)

    def coordinate_labels(self) -> List[str]:
        labels = []
        for name, block in self.blocks.items():
            size = block.stop - block.start
            if size == 1 and block.shape in ((), (1,)):
                labels.append(name)
                continue
            for flat in range(size):
                idx = np.unravel_index(flat, block.shape)
                labels.append(f"{name}[{','.join(str(i) for i in idx)}]")
        return labels

    def get(self, values: np.ndarray, name: str) -> np.ndarray:
        """Block view over the last axis of ``values`` (works for stacked draws)."""
        block = self.blocks[name]
        chunk = values[..., block.start:block.stop]
        return chunk.reshape(values.shape[:-1] + block.shape)


class ParamVector(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    layout: ParamLayout

    def block(self, name: str) -> np.ndarray:
        return self.layout.get(self.values, name)

    def with_block(self, name: str, value) -> "ParamVector":
        block = self.layout.blocks[name]
        values = self.values.copy()
        values[block.start:block.stop] = np.broadcast_to(
            np.asarray(value, dtype=float), block.shape
        ).ravel()
        return ParamVector(values=values, layout=self.layout)

    @classmethod
    def zeros(cls, layout: ParamLayout) -> "ParamVector":
        return cls(values=np.zeros(layout.dim), layout=layout)


class SamplerConfig(BaseModel):
    n_chains: int = Field(default=4, ge=1)
    n_warmup: int = Field(default=1000, ge=0)
    n_draws: int = Field(default=1000, ge=1)
    target_accept: float = Field(default=0.8, gt=0, lt=1)
    max_tree_depth: int = Field(default=10, ge=1)
    seed: int = 0
    initial_jitter: float = Field(default=0.5, ge=0)
    max_init_attempts: int = Field(default=20, ge=1)


class ModelDesign(BaseModel):
    """Design arrays for one set of stations.

    ``B_tilde`` is (M, S, K-2) and ``Z`` is (M, S, K-1); both are empty along
    the last axis for the Linear family. ``bases``/``grids`` are the training
    decompositions that new rows are projected through.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    X: np.ndarray
    B_tilde: np.ndarray
    Z: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    grids: list = Field(default_factory=list)
    bases: list = Field(default_factory=list)
    clamped: np.ndarray | None = None
