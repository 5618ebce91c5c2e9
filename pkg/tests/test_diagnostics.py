import numpy as np
import pytest
from scipy import integrate, stats

from app.models.gev import GevParams
from app.models.posterior import StationPosterior
from app.services.diagnostics import (
    acrps,
    bayes_pval,
    build_report,
    crps_sample,
    empirical_quantile,
    loo_ic,
    pit,
    pval_band_summary,
    relative_acrps,
    report_to_long_frame,
    score_station,
)
from app.services.gev import gev_sample


def brute_force_crps(x, y):
    x = np.asarray(x, dtype=float)
    return np.mean(np.abs(x - y)) - 0.5 * np.mean(np.abs(x[:, None] - x[None, :]))


def station_posterior(station_id, mu=100.0, sigma=30.0, xi=0.1, n=400, seed=0):
    rng = np.random.default_rng(seed)
    return StationPosterior(
        station_id=station_id,
        gauged=True,
        mu=mu + rng.normal(0, 2, n),
        sigma=sigma + rng.normal(0, 1, n),
        xi=np.clip(xi + rng.normal(0, 0.02, n), -0.45, 0.45),
    )


def test_pit_counts_strictly_below():
    replicates = np.arange(1.0, 6.0)
    assert pit(replicates, 3.0) == pytest.approx(0.4)
    assert pit(replicates, 0.0) == 0.0
    assert pit(replicates, 10.0) == 1.0
    with pytest.raises(ValueError):
        pit(np.array([]), 1.0)


def test_empirical_quantile_interpolates():
    assert empirical_quantile(np.array([4.0, 1.0, 3.0, 2.0]), 0.5) == pytest.approx(2.5)
    assert empirical_quantile(np.array([1.0, 2.0, 3.0, 4.0, 5.0]), 0.9) == pytest.approx(4.6)


def test_bayes_pval():
    draws = np.arange(100.0)
    assert bayes_pval(draws, np.array([40.0, 60.0]), 2.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        bayes_pval(draws, np.array([]), 2.0)


def test_pval_band_excludes_endpoints():
    assert pval_band_summary([0.01, 0.5, 0.6, 0.97]) == pytest.approx(0.5)
    assert pval_band_summary([0.05, 0.95]) == 0.0
    with pytest.raises(ValueError):
        pval_band_summary([])


def test_crps_small_ensembles():
    assert crps_sample(np.array([2.0]), 5.0) == pytest.approx(3.0)
    assert crps_sample(np.array([0.0, 1.0]), 0.5) == pytest.approx(0.25)


def test_crps_matches_pairwise_definition():
    x = np.random.default_rng(0).gamma(2.0, size=301)
    for y in (0.1, 2.0, 9.0):
        assert crps_sample(x, y) == pytest.approx(brute_force_crps(x, y), rel=1e-10)


def test_crps_of_gumbel_ensemble_matches_quadrature():
    y = 1.3
    dist = stats.gumbel_r()
    below, _ = integrate.quad(lambda t: dist.cdf(t) ** 2, -np.inf, y)
    above, _ = integrate.quad(lambda t: (1.0 - dist.cdf(t)) ** 2, y, np.inf)
    x = dist.rvs(size=100_000, random_state=np.random.default_rng(1))
    assert crps_sample(x, y) == pytest.approx(below + above, abs=0.01)


def test_crps_is_affine_equivariant():
    x = np.random.default_rng(2).normal(size=500)
    a, b = 7.0, 3.5
    assert crps_sample(a + b * x, a + b * 0.4) == pytest.approx(b * crps_sample(x, 0.4), rel=1e-10)


def test_acrps_and_ratio():
    assert acrps([1.0, 2.0, 3.0]) == pytest.approx(2.0)
    assert relative_acrps([2.0, 2.0], [1.0, 1.0]) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        acrps([])


def test_loo_with_identical_draws():
    column = np.array([-1.0, -2.0, -0.5])
    loglik = np.tile(column, (200, 1))
    result = loo_ic(loglik)
    assert result.elpd_loo == pytest.approx(column.sum())
    assert result.looic == pytest.approx(-2 * column.sum())
    assert result.p_loo == pytest.approx(0.0, abs=1e-10)
    np.testing.assert_allclose(result.pointwise, -2 * column)
    assert result.flagged == []


def test_loo_prefers_the_better_model():
    rng = np.random.default_rng(3)
    y = rng.normal(size=100)
    good = rng.normal(0.0, 0.1, size=(500, 1))
    bad = rng.normal(1.5, 0.1, size=(500, 1))
    looic_good = loo_ic(stats.norm.logpdf(y[None, :], good, 1.0)).looic
    looic_bad = loo_ic(stats.norm.logpdf(y[None, :], bad, 1.0)).looic
    assert looic_good < looic_bad


def test_loo_flags_degenerate_weights():
    loglik = np.zeros((100, 2))
    loglik[7, 1] = -1000.0
    result = loo_ic(loglik)
    assert result.flagged == [1]


def test_loo_rejects_non_finite():
    loglik = np.zeros((10, 3))
    loglik[0, 0] = -np.inf
    with pytest.raises(ValueError):
        loo_ic(loglik)


def test_score_station():
    sp = station_posterior("a")
    y = gev_sample(GevParams(mu=100, sigma=30, xi=0.1), 12, rng_seed=4)
    years = np.arange(2000, 2012)
    observations, station, levels = score_station(sp, y, years, [10, 50], seed=1)
    assert [o.year for o in observations] == list(range(2000, 2012))
    assert station.n_blocks == 12
    assert station.acrps == pytest.approx(np.mean([o.crps for o in observations]))
    assert [level.R for level in levels] == [10.0, 50.0]
    assert levels[0].empirical == pytest.approx(np.quantile(y, 0.9))
    again, _, _ = score_station(sp, y, years, [10, 50], seed=1)
    assert [o.pit for o in again] == [o.pit for o in observations]


def test_build_report_and_long_frame():
    posteriors = [station_posterior(s, seed=i) for i, s in enumerate(["a", "b", "c"])]
    maxima = {s: gev_sample(GevParams(mu=100, sigma=30, xi=0.1), 8, rng_seed=i) for i, s in enumerate("abc")}
    years = {s: np.arange(1990, 1998) for s in "abc"}
    report = build_report("splines", posteriors, maxima, years, [50, 100], seed=0)
    assert len(report.observations) == 24
    assert len(report.stations) == 3
    assert len(report.return_levels) == 6
    assert set(report.pval_band) == {"50", "100"}
    assert report.looic is None

    frame = report_to_long_frame(report)
    assert list(frame.columns) == ["model", "metric", "station_id", "key", "value"]
    counts = frame["metric"].value_counts().to_dict()
    assert counts == {"pit": 24, "crps": 24, "acrps": 3, "pval": 6, "ciw": 6}


def test_loo_matches_exact_refits_on_conjugate_normal():
    # y_i ~ N(theta, 1) with theta ~ N(0, 10^2): every leave-one-out predictive is closed form
    rng = np.random.default_rng(5)
    y = rng.normal(1.0, 1.0, size=20)
    prior_precision = 1.0 / 100.0

    precision = prior_precision + y.size
    theta = rng.normal(y.sum() / precision, 1.0 / np.sqrt(precision), size=20_000)
    estimate = loo_ic(stats.norm.logpdf(y[None, :], theta[:, None], 1.0))

    exact = 0.0
    for i in range(y.size):
        rest = np.delete(y, i)
        prec_i = prior_precision + rest.size
        exact += stats.norm.logpdf(y[i], rest.sum() / prec_i, np.sqrt(1.0 + 1.0 / prec_i))
    assert estimate.elpd_loo == pytest.approx(exact, abs=0.05)
