import jax.numpy as jnp
import numpy as np
import pytest
from scipy import stats

from app.models.spec import ModelFamily, SamplerConfig
from app.services.sampler_service import (
    SamplerService,
    chain_statistics,
    draws_frame,
    draws_from_frame,
    ess,
    leapfrog_energies,
    rhat,
    sample,
    stats_from_frame,
    summarize_draws,
)
from app.utils.errors import SamplingError


def standard_normal(z):
    return -0.5 * jnp.sum(z**2)


@pytest.fixture(scope="module")
def gaussian_draws():
    cfg = SamplerConfig(n_chains=4, n_warmup=1000, n_draws=1000, seed=0)
    return SamplerService(cfg).run(standard_normal, np.zeros(5))


def test_gaussian_moments(gaussian_draws):
    flat = gaussian_draws.flat()
    assert gaussian_draws.draws.shape == (4, 1000, 5)
    assert np.all(np.abs(flat.mean(axis=0)) < 0.1)
    assert np.all(np.abs(flat.var(axis=0) - 1.0) < 0.1)


def test_gaussian_convergence(gaussian_draws):
    for j in range(5):
        x = gaussian_draws.draws[:, :, j]
        assert rhat(x) < 1.01
        assert ess(x) > 1000
    assert gaussian_draws.divergence_count == 0


def test_gaussian_marginal_passes_ks(gaussian_draws):
    x = gaussian_draws.draws[:, ::4, 0].ravel()
    assert stats.kstest(x, "norm").pvalue > 0.01


def test_sampler_statistics_shapes(gaussian_draws):
    assert gaussian_draws.log_joint.shape == (4, 1000)
    assert gaussian_draws.tree_depth.shape == (4, 1000)
    assert np.all(gaussian_draws.tree_depth >= 1)
    assert gaussian_draws.step_size.shape == (4,)
    np.testing.assert_allclose(
        gaussian_draws.log_joint, -0.5 * np.sum(gaussian_draws.draws**2, axis=-1), rtol=1e-10, atol=1e-12
    )


def test_same_seed_same_draws():
    cfg = SamplerConfig(n_chains=2, n_warmup=50, n_draws=50, seed=42)
    first = SamplerService(cfg).run(standard_normal, np.zeros(3))
    second = SamplerService(cfg).run(standard_normal, np.zeros(3))
    np.testing.assert_array_equal(first.draws, second.draws)
    other = SamplerService(cfg.model_copy(update={"seed": 43})).run(standard_normal, np.zeros(3))
    assert not np.array_equal(first.draws, other.draws)


def test_no_finite_start_raises():
    cfg = SamplerConfig(n_chains=1, n_warmup=10, n_draws=10, max_init_attempts=3)

    def nowhere(z):
        return jnp.asarray(-jnp.inf) + 0.0 * jnp.sum(z)

    with pytest.raises(SamplingError):
        SamplerService(cfg).run(nowhere, np.zeros(2))


def test_start_retries_with_smaller_jitter():
    cfg = SamplerConfig(n_chains=1, initial_jitter=8.0, max_init_attempts=20, seed=1)

    def box(z):
        return jnp.where(jnp.all(jnp.abs(z) < 1.0), 0.0, -jnp.inf)

    start = SamplerService(cfg).initial_position(box, np.zeros(4), np.ones(4), chain=0)
    assert np.all(np.abs(start) < 1.0)


def test_rhat_and_ess_of_independent_chains():
    x = np.random.default_rng(0).standard_normal((4, 1000))
    assert 0.99 < rhat(x) < 1.01
    assert 3000 < ess(x) < 5000


def test_ess_of_autocorrelated_chain():
    rho = 0.9
    rng = np.random.default_rng(1)
    n = 20000
    x = np.empty(n)
    x[0] = rng.standard_normal()
    noise = rng.standard_normal(n) * np.sqrt(1 - rho**2)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + noise[t]
    expected = n * (1 - rho) / (1 + rho)
    assert ess(x[None, :]) == pytest.approx(expected, rel=0.2)


def test_rhat_flags_disagreeing_chains():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((4, 500)) + np.array([[0.0], [0.0], [3.0], [3.0]])
    assert rhat(x) > 1.1


def test_constant_chains_give_nan():
    x = np.ones((2, 100))
    assert np.isnan(rhat(x))
    assert np.isnan(ess(x))


def test_too_few_draws_rejected():
    with pytest.raises(ValueError):
        rhat(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        rhat(np.zeros((1, 100)))


def test_leapfrog_energy_error_shrinks_with_step():
    rng = np.random.default_rng(3)
    q, p = rng.standard_normal(4), rng.standard_normal(4)
    errors = []
    for step in (0.05, 0.025):
        energies = leapfrog_energies(standard_normal, q, p, step, int(round(1.0 / step)))
        errors.append(np.max(np.abs(energies - energies[0])))
    assert errors[0] < 0.01
    assert errors[1] < errors[0]
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.5)


def test_regression_model_sampling(specs, designs, small_dataset, fast_sampler):
    family = ModelFamily.LINEAR
    draws = sample(specs[family], small_dataset, designs[family], fast_sampler)
    assert draws.draws.shape[:2] == (2, 150)
    assert np.all(np.isfinite(draws.draws))
    summary = summarize_draws(draws)
    assert list(summary["parameter"]) == draws.layout.coordinate_labels()
    assert {"mean", "sd", "q05", "q50", "q95", "rhat", "ess"} <= set(summary.columns)


def test_draws_survive_the_table_round_trip(gaussian_draws):
    restored = draws_from_frame(
        draws_frame(gaussian_draws),
        gaussian_draws.layout,
        stats_from_frame(chain_statistics(gaussian_draws)),
    )
    np.testing.assert_array_equal(restored.draws, gaussian_draws.draws)
    np.testing.assert_array_equal(restored.divergences, gaussian_draws.divergences)
    np.testing.assert_array_equal(restored.step_size, gaussian_draws.step_size)
