import numpy as np
import pytest

from app.models.config import RunConfig
from app.models.dataset import THETAS, PriorCalibration, Transform
from app.models.posterior import PosteriorDraws
from app.models.spec import ModelFamily, ModelSpec, SamplerConfig
from app.services.ingest_service import assemble_dataset
from app.services.model import build_design, build_layout
from app.services.simulation import EffectShape, SimulationSettings, simulate_basin
from app.storage import RunStore


def calibration_from_truth(truth) -> PriorCalibration:
    values = truth[list(THETAS)].to_numpy()
    return PriorCalibration(
        m_hat=tuple(float(v) for v in values.mean(axis=0)),
        s_hat=tuple(float(v) for v in values.std(axis=0, ddof=1)),
        linked_estimates={
            row.station_id: (float(row.psi), float(row.tau), float(row.phi)) for row in truth.itertuples()
        },
    )


def basin_dataset(basin):
    transforms = {name: Transform.IDENTITY for name in basin.covariates.columns[1:]}
    return assemble_dataset(basin.maxima, basin.covariates, transforms)


def make_spec(family, dataset, calibration, n_basis=6) -> ModelSpec:
    return ModelSpec(
        family=ModelFamily(family),
        n_basis=n_basis,
        calib=calibration,
        covariates=dataset.covariate_names,
    )


def synthetic_draws(spec, S, n_chains=2, n_draws=50, seed=0, spread=0.05) -> PosteriorDraws:
    """Draws scattered around a sensible point, without running the sampler."""
    layout = build_layout(spec, S)
    rng = np.random.default_rng(seed)
    centre = np.zeros(layout.dim)
    for i, theta in enumerate(THETAS):
        centre[layout.blocks[f"beta0_{theta}"].start] = spec.calib.m_hat[i]
    for name, block in layout.blocks.items():
        if name.startswith("log_"):
            centre[block.start:block.stop] = np.log(0.1)
    draws = centre + spread * rng.standard_normal((n_chains, n_draws, layout.dim))
    return PosteriorDraws(
        draws=draws,
        layout=layout,
        log_joint=np.zeros((n_chains, n_draws)),
        divergences=np.zeros((n_chains, n_draws), dtype=bool),
        tree_depth=np.full((n_chains, n_draws), 3),
        step_size=np.full(n_chains, 0.1),
    )


@pytest.fixture(scope="session")
def small_basin():
    """S=12, T=10, M=3 basin with two nonlinear active covariates."""
    return simulate_basin(SimulationSettings(S=12, T=10, M=3, effects=EffectShape.NONLINEAR, n_active=2, seed=11))


@pytest.fixture(scope="session")
def small_dataset(small_basin):
    return basin_dataset(small_basin)


@pytest.fixture(scope="session")
def small_calibration(small_basin):
    return calibration_from_truth(small_basin.truth)


@pytest.fixture(scope="session")
def specs(small_dataset, small_calibration):
    return {family: make_spec(family, small_dataset, small_calibration) for family in ModelFamily}


@pytest.fixture(scope="session")
def designs(specs, small_dataset):
    return {family: build_design(spec, small_dataset.X) for family, spec in specs.items()}


@pytest.fixture
def fast_sampler():
    return SamplerConfig(n_chains=2, n_warmup=150, n_draws=150, seed=3)


@pytest.fixture
def stored_run(tmp_path, small_dataset, specs):
    """A run directory holding synthetic draws of the Splines family."""
    store = RunStore(tmp_path / "runs")
    run_dir = store.create_run("demo")
    spec = specs[ModelFamily.SPLINES]
    config = RunConfig(model=ModelFamily.SPLINES, n_basis=spec.n_basis, return_periods=[50.0, 100.0], seed=1)
    store.save_fit(run_dir, config, spec, small_dataset, synthetic_draws(spec, small_dataset.S, seed=3))
    return store, run_dir
