import numpy as np
import pytest
from scipy import integrate, stats

from app.models.dataset import THETAS, Transform
from app.models.spec import ModelFamily, ParamVector, SamplerConfig
from app.services.gev import LOG_ZERO, shape_link_inverse_array
from app.services.ingest_service import assemble_dataset
from app.services.sampler_service import SamplerService
from app.services.model import (
    GevRegressionModel,
    assemble_predictor,
    build_design,
    build_layout,
    design_for_new_rows,
    half_cauchy_logpdf,
    half_normal_logpdf,
    linked_predictors,
    log_joint,
    log_joint_grad,
)

from .conftest import make_spec


def naive_log_joint(spec, dataset, design, values):
    """Loop-and-scipy evaluation of the log-joint, used as an oracle."""
    layout = build_layout(spec, dataset.S)

    def get(name):
        return layout.get(values, name)

    lp = 0.0
    linked = []
    for i, theta in enumerate(THETAS):
        m_hat, s_hat = spec.calib.m_hat[i], spec.calib.s_hat[i]
        beta0 = get(f"beta0_{theta}")[0]
        kappa = np.exp(get(f"log_kappa_{theta}")[0])
        z_u = get(f"u_{theta}")
        eta = beta0 + kappa * z_u
        lp += stats.norm.logpdf(beta0, m_hat, 2 * s_hat)
        lp += stats.norm.logpdf(z_u).sum()
        lp += stats.halfnorm.logpdf(kappa, scale=2) + np.log(kappa)
        for m in range(spec.M):
            if spec.family == ModelFamily.LINEAR:
                beta = get(f"beta_{theta}")[m]
                eta = eta + beta * design.X[:, m]
                lp += stats.norm.logpdf(beta, 0, 2)
            elif spec.family == ModelFamily.SPLINES:
                beta = get(f"beta_{theta}")[m]
                omega = np.exp(get(f"log_omega_{theta}")[m])
                z_gamma = get(f"gamma_{theta}")[m]
                eta = eta + beta * design.X[:, m] + design.B_tilde[m] @ (omega * z_gamma)
                lp += stats.norm.logpdf(beta, 0, 2)
                lp += stats.norm.logpdf(z_gamma).sum()
                lp += stats.halfnorm.logpdf(omega, scale=2) + np.log(omega)
            else:
                lam = np.exp(get(f"log_lambda_{theta}")[m])
                delta = np.exp(get(f"log_delta_{theta}")[m])
                z_alpha = get(f"alpha_{theta}")[m]
                eta_hs = np.exp(get(f"log_eta_{theta}")[0])
                alpha = eta_hs * lam * np.sqrt(delta) * z_alpha
                eta = eta + design.Z[m] @ alpha
                lp += stats.norm.logpdf(z_alpha).sum()
                lp += stats.halfcauchy.logpdf(lam) + np.log(lam)
                lp += np.sum(stats.halfcauchy.logpdf(delta) + np.log(delta))
        if spec.family == ModelFamily.SPLINES_HS:
            eta_hs = np.exp(get(f"log_eta_{theta}")[0])
            lp += stats.halfcauchy.logpdf(eta_hs, scale=s_hat) + np.log(eta_hs)
        linked.append(eta)

    psi, tau, phi = linked
    mu, sigma, xi = np.exp(psi), np.exp(psi + tau), shape_link_inverse_array(phi)
    for n in range(dataset.N):
        s = dataset.station_index[n]
        term = stats.genextreme.logpdf(dataset.y[n], -xi[s], loc=mu[s], scale=sigma[s])
        if not np.isfinite(term):
            return LOG_ZERO
        lp += term
    return lp


def starting_points(model, n, seed=0, spread=0.01):
    rng = np.random.default_rng(seed)
    base = model.base_position()
    return [base + spread * rng.standard_normal(model.dim) for _ in range(n)]


@pytest.mark.parametrize("family", list(ModelFamily))
def test_layout_partitions_the_vector(family, specs):
    spec = specs[family]
    S, M, K = 12, spec.M, spec.n_basis
    layout = build_layout(spec, S)
    blocks = sorted(layout.blocks.values(), key=lambda b: b.start)
    assert blocks[0].start == 0
    for a, b in zip(blocks, blocks[1:]):
        assert a.stop == b.start
    per_theta = {
        ModelFamily.LINEAR: 1 + M + S + 1,
        ModelFamily.SPLINES: 1 + M + M * (K - 2) + M + S + 1,
        ModelFamily.SPLINES_HS: 1 + 2 * M * (K - 1) + M + 1 + S + 1,
    }[family]
    assert layout.dim == 3 * per_theta
    assert len(layout.coordinate_labels()) == layout.dim


@pytest.mark.parametrize("family", list(ModelFamily))
def test_log_joint_matches_naive_evaluation(family, specs, designs, small_dataset):
    model = GevRegressionModel(specs[family], small_dataset, designs[family])
    for values in starting_points(model, 5, seed=1):
        expected = naive_log_joint(specs[family], small_dataset, designs[family], values)
        assert model.log_joint(values) == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("family", list(ModelFamily))
def test_gradient_matches_finite_differences(family, specs, designs, small_dataset):
    model = GevRegressionModel(specs[family], small_dataset, designs[family])
    h = 1e-6
    for values in starting_points(model, 10, seed=2):
        assert model.log_joint(values) > LOG_ZERO / 2
        grad = model.grad(values)
        fd = np.empty(model.dim)
        for j in range(model.dim):
            step = np.zeros(model.dim)
            step[j] = h
            fd[j] = (model.log_joint(values + step) - model.log_joint(values - step)) / (2 * h)
        assert np.linalg.norm(grad - fd) <= 1e-5 * np.linalg.norm(grad)


def test_module_level_helpers_agree_with_model(specs, designs, small_dataset):
    family = ModelFamily.SPLINES
    model = GevRegressionModel(specs[family], small_dataset, designs[family])
    values = starting_points(model, 1, seed=3)[0]
    params = ParamVector(values=values, layout=model.layout)
    assert log_joint(specs[family], params, small_dataset, designs[family]) == model.log_joint(values)
    np.testing.assert_array_equal(log_joint_grad(specs[family], params, small_dataset, designs[family]), model.grad(values))


@pytest.mark.parametrize("family", list(ModelFamily))
def test_outside_support_gives_finite_sentinel(family, specs, designs, small_dataset):
    model = GevRegressionModel(specs[family], small_dataset, designs[family])
    params = ParamVector.zeros(model.layout)
    # huge location, small scale, shape near 0.5: lower endpoint above every maximum
    params = params.with_block("beta0_psi", 10.0).with_block("beta0_tau", -5.0).with_block("beta0_phi", 5.0)
    assert model.log_joint(params.values) == LOG_ZERO
    assert np.all(np.isfinite(model.grad(params.values)))


def copy_shared_blocks(source_values, source_layout, target_layout):
    target = ParamVector.zeros(target_layout)
    for name in target_layout.blocks:
        if name in source_layout.blocks:
            target = target.with_block(name, source_layout.get(source_values, name))
    return target


def test_splines_with_zero_penalized_part_equal_linear(specs, designs):
    S = designs[ModelFamily.LINEAR].X.shape[0]
    linear = build_layout(specs[ModelFamily.LINEAR], S)
    splines = build_layout(specs[ModelFamily.SPLINES], S)
    values = np.random.default_rng(5).normal(size=linear.dim)
    nested = copy_shared_blocks(values, linear, splines)
    assert np.all(nested.block("gamma_psi") == 0)

    psi_l, tau_l, phi_l = assemble_predictor(
        specs[ModelFamily.LINEAR], ParamVector(values=values, layout=linear), designs[ModelFamily.LINEAR]
    )
    psi_s, tau_s, phi_s = assemble_predictor(specs[ModelFamily.SPLINES], nested, designs[ModelFamily.SPLINES])
    np.testing.assert_allclose(psi_s, psi_l, atol=1e-12)
    np.testing.assert_allclose(tau_s, tau_l, atol=1e-12)
    np.testing.assert_allclose(phi_s, phi_l, atol=1e-12)


def test_horseshoe_with_unit_scales_equals_splines(specs, designs):
    S = designs[ModelFamily.SPLINES].X.shape[0]
    splines = build_layout(specs[ModelFamily.SPLINES], S)
    hs = build_layout(specs[ModelFamily.SPLINES_HS], S)
    values = np.random.default_rng(6).normal(size=splines.dim)
    source = ParamVector(values=values, layout=splines)

    target = copy_shared_blocks(values, splines, hs)
    for theta in THETAS:
        omega = np.exp(source.block(f"log_omega_{theta}"))
        alpha = np.column_stack(
            [source.block(f"beta_{theta}"), omega[:, None] * source.block(f"gamma_{theta}")]
        )
        # log scales stay at zero, so the natural alpha equals the stored block
        target = target.with_block(f"alpha_{theta}", alpha)

    expected = np.stack(assemble_predictor(specs[ModelFamily.SPLINES], source, designs[ModelFamily.SPLINES]))
    actual = np.stack(assemble_predictor(specs[ModelFamily.SPLINES_HS], target, designs[ModelFamily.SPLINES_HS]))
    np.testing.assert_allclose(actual, expected, atol=1e-10)


def test_intercept_only_predictor(small_basin, small_calibration):
    transforms = {}
    dataset = assemble_dataset(small_basin.maxima, small_basin.covariates[["station_id"]], transforms)
    assert dataset.M == 0
    for family in ModelFamily:
        spec = make_spec(family, dataset, small_calibration)
        design = build_design(spec, dataset.X)
        layout = build_layout(spec, dataset.S)
        params = ParamVector(values=np.random.default_rng(7).normal(size=layout.dim), layout=layout)
        predictors = assemble_predictor(spec, params, design)
        for i, theta in enumerate(THETAS):
            kappa = np.exp(params.block(f"log_kappa_{theta}")[0])
            expected = params.block(f"beta0_{theta}")[0] + kappa * params.block(f"u_{theta}")
            np.testing.assert_allclose(predictors[i], expected, atol=1e-12)


def test_duplicated_maxima_add_their_likelihood(specs, designs, small_dataset):
    family = ModelFamily.LINEAR
    model = GevRegressionModel(specs[family], small_dataset, designs[family])
    values = starting_points(model, 1, seed=8)[0]
    rows = small_dataset.station_index == 0
    doubled = small_dataset.model_copy(
        update=dict(
            y=np.concatenate([small_dataset.y, small_dataset.y[rows]]),
            station_index=np.concatenate([small_dataset.station_index, small_dataset.station_index[rows]]),
            years=np.concatenate([small_dataset.years, small_dataset.years[rows]]),
        )
    )
    lp_obs, _ = model.log_likelihood_terms(values)
    extra = float(np.sum(np.asarray(lp_obs)[rows]))
    doubled_model = GevRegressionModel(specs[family], doubled, designs[family])
    assert doubled_model.log_joint(values) == pytest.approx(model.log_joint(values) + extra, rel=1e-10)


def test_observation_order_does_not_matter(specs, designs, small_dataset):
    family = ModelFamily.SPLINES_HS
    model = GevRegressionModel(specs[family], small_dataset, designs[family])
    values = starting_points(model, 1, seed=9)[0]
    order = np.random.default_rng(9).permutation(small_dataset.N)
    shuffled = small_dataset.model_copy(
        update=dict(
            y=small_dataset.y[order],
            station_index=small_dataset.station_index[order],
            years=small_dataset.years[order],
        )
    )
    shuffled_model = GevRegressionModel(specs[family], shuffled, designs[family])
    assert shuffled_model.log_joint(values) == pytest.approx(model.log_joint(values), rel=1e-12)


@pytest.mark.parametrize("family", [ModelFamily.SPLINES, ModelFamily.SPLINES_HS])
def test_new_rows_at_training_points_reproduce_design(family, specs, designs):
    design = designs[family]
    again = design_for_new_rows(specs[family], design, design.X)
    assert not again.clamped.any()
    np.testing.assert_allclose(again.B_tilde, design.B_tilde, atol=1e-9)
    np.testing.assert_allclose(again.Z, design.Z, atol=1e-9)


def test_new_rows_outside_range_are_clamped(specs, designs):
    family = ModelFamily.SPLINES
    design = designs[family]
    row = design.upper + 1.0
    new = design_for_new_rows(specs[family], design, row)
    assert new.clamped.all()
    np.testing.assert_array_equal(new.X[0], design.upper)


def test_predictors_broadcast_over_draws(specs, designs):
    family = ModelFamily.SPLINES_HS
    design = designs[family]
    layout = build_layout(specs[family], design.X.shape[0])
    values = np.random.default_rng(10).normal(size=(4, layout.dim))
    stacked = np.asarray(linked_predictors(specs[family], layout, values, design.X, design.B_tilde, design.Z))
    assert stacked.shape == (4, 3, design.X.shape[0])
    single = np.asarray(linked_predictors(specs[family], layout, values[2], design.X, design.B_tilde, design.Z))
    np.testing.assert_allclose(stacked[2], single, atol=1e-12)


@pytest.mark.parametrize("logpdf", [half_normal_logpdf, half_cauchy_logpdf])
def test_scale_priors_integrate_to_one(logpdf):
    total, _ = integrate.quad(lambda x: float(np.exp(logpdf(x, 2.0))), 0, np.inf, limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_start_jitters_everything_but_the_intercepts(specs, designs, small_dataset):
    family = ModelFamily.SPLINES_HS
    spec = specs[family]
    model = GevRegressionModel(spec, small_dataset, designs[family])
    base, mask = model.base_position(), model.jitter_mask()
    intercepts = [model.layout.blocks[f"beta0_{theta}"].start for theta in THETAS]
    np.testing.assert_array_equal(base[intercepts], spec.calib.m_hat)
    assert not mask[intercepts].any()
    assert np.all(base[mask] == 0.0)

    start = SamplerService(SamplerConfig(n_chains=1, seed=3)).initial_position(
        model.log_density, base, mask.astype(float), chain=0
    )
    np.testing.assert_array_equal(start[intercepts], base[intercepts])
    assert np.all(np.abs(start[mask]) <= 0.5)
    assert model.log_joint(start) > LOG_ZERO


@pytest.mark.parametrize("family", [ModelFamily.LINEAR, ModelFamily.SPLINES])
def test_station_order_does_not_matter(family, specs, designs, small_dataset):
    spec, design = specs[family], designs[family]
    perm = np.random.default_rng(10).permutation(small_dataset.S)
    shuffled = small_dataset.model_copy(
        update=dict(
            station_ids=[small_dataset.station_ids[s] for s in perm],
            X=small_dataset.X[perm],
            X_raw=small_dataset.X_raw[perm],
            station_index=np.argsort(perm)[small_dataset.station_index],
        )
    )
    shuffled_design = build_design(spec, shuffled.X)
    np.testing.assert_array_equal(shuffled_design.X, design.X[perm])

    model = GevRegressionModel(spec, small_dataset, design)
    values = starting_points(model, 1, seed=10)[0]
    moved = values.copy()
    for theta in THETAS:
        u = model.layout.blocks[f"u_{theta}"]
        moved[u.start : u.stop] = values[u.start : u.stop][perm]
        if not spec.uses_splines:
            continue
        gamma = model.layout.blocks[f"gamma_{theta}"]
        rotated = values[gamma.start : gamma.stop].reshape(gamma.shape).copy()
        for m in range(spec.M):
            # eigenvectors are only fixed up to sign, so map the coefficients across
            R = np.linalg.lstsq(design.B_tilde[m][perm], shuffled_design.B_tilde[m], rcond=None)[0]
            np.testing.assert_allclose(R @ R.T, np.eye(R.shape[0]), atol=1e-6)
            rotated[m] = R.T @ rotated[m]
        moved[gamma.start : gamma.stop] = rotated.ravel()

    if spec.uses_splines:
        np.testing.assert_allclose(shuffled_design.Z[:, :, 0], design.Z[:, perm, 0], atol=1e-12)
        for m in range(spec.M):
            before = design.B_tilde[m] @ design.B_tilde[m].T
            after = shuffled_design.B_tilde[m] @ shuffled_design.B_tilde[m].T
            np.testing.assert_allclose(after, before[np.ix_(perm, perm)], atol=1e-10)

    shuffled_model = GevRegressionModel(spec, shuffled, shuffled_design)
    lp_obs, _ = model.log_likelihood_terms(values)
    shuffled_lp, _ = shuffled_model.log_likelihood_terms(moved)
    assert float(np.sum(shuffled_lp)) == pytest.approx(float(np.sum(lp_obs)), rel=1e-9)
    assert shuffled_model.log_joint(moved) == pytest.approx(model.log_joint(values), rel=1e-9)
