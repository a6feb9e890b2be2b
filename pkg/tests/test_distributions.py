import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from disastertoll.distributions import (
    INFINITE_MEAN,
    GpdOrthoParams,
    GpdParams,
    PoissonParams,
    gpd_cdf,
    gpd_loglik,
    gpd_loglik_grad,
    gpd_mean,
    gpd_median,
    gpd_quantile,
    gpd_sample,
    poisson_pmf,
    poisson_sample,
)
from disastertoll.errors import DomainError


def test_cdf_exponential_case():
    assert gpd_cdf(GpdParams(0.0, 1.0), 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-12)


def test_cdf_unit_tail():
    assert gpd_cdf(GpdParams(1.0, 1.0), 1.0) == pytest.approx(0.5, abs=1e-15)


def test_cdf_upper_endpoint():
    assert gpd_cdf(GpdParams(-0.5, 1.0), 2.0) == 1.0


@pytest.mark.parametrize(
    "xi, beta, y, expected",
    [
        # frozen from a 30-digit mpmath evaluation of 1 - (1 + xi y / beta)^(-1/xi)
        (0.3, 2.0, 5.0, 0.84516356228734817),
        (-0.4, 1.5, 2.0, 0.85122945554606806),
        (2.545, 10.0, 100.0, 0.72388493190458535),
        (1e-3, 1.0, 3.0, 0.94998883406562908),
    ],
)
def test_cdf_against_high_precision_values(xi, beta, y, expected):
    assert gpd_cdf(GpdParams(xi, beta), y) == pytest.approx(expected, rel=1e-13)


def test_cdf_agrees_with_scipy():
    y = np.linspace(0, 40, 81)
    for xi in (-0.3, 0.2, 1.5):
        ours = gpd_cdf(GpdParams(xi, 3.0), np.minimum(y, 3.0 / 0.3 if xi < 0 else np.inf))
        ref = stats.genpareto.cdf(np.minimum(y, 10.0 if xi < 0 else np.inf), xi, scale=3.0)
        np.testing.assert_allclose(ours, ref, atol=1e-13)


def test_cdf_rejects_negative_and_beyond_endpoint():
    with pytest.raises(DomainError):
        gpd_cdf(GpdParams(0.2, 1.0), -1.0)
    with pytest.raises(DomainError):
        gpd_cdf(GpdParams(-0.5, 1.0), 2.5)


def test_quantile_trivial_values():
    assert gpd_quantile(GpdParams(1.0, 1.0), 0.5) == pytest.approx(1.0, abs=1e-15)
    assert gpd_quantile(GpdParams(0.0, 2.0), 1 - math.exp(-1)) == pytest.approx(2.0, abs=1e-12)


def test_quantile_round_trip_with_bisection_oracle():
    params = GpdParams(0.3, 2.0)
    q = gpd_quantile(params, 0.9)
    # independent inverse: bisection on the cdf
    lo, hi = 0.0, 1e3
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if gpd_cdf(params, mid) < 0.9 else (lo, mid)
    assert q == pytest.approx(0.5 * (lo + hi), abs=1e-10)
    assert gpd_cdf(params, q) == pytest.approx(0.9, abs=1e-10)


def test_quantile_domain():
    with pytest.raises(DomainError):
        gpd_quantile(GpdParams(0.1, 1.0), 1.0)


def test_mean_values():
    assert gpd_mean(GpdParams(0.5, 2.0)) == 4.0
    assert gpd_mean(GpdParams(0.0, 3.0)) == 3.0
    assert gpd_mean(GpdParams(1.2, 1.0)) is INFINITE_MEAN
    assert gpd_mean(GpdParams(1.0, 1.0)) is INFINITE_MEAN


def test_median_at_large_tail_index():
    assert gpd_median(GpdParams(1.5, 1.0)) == pytest.approx((2**1.5 - 1) / 1.5, rel=1e-14)


def test_params_validation():
    with pytest.raises(DomainError):
        GpdParams(-1.0, 1.0)
    with pytest.raises(DomainError):
        GpdParams(0.1, 0.0)
    with pytest.raises(DomainError):
        PoissonParams(0.0)


def test_loglik_values():
    assert gpd_loglik(GpdParams(0.0, 1.0).to_ortho(), [1.0]) == pytest.approx(-1.0, abs=1e-14)
    assert math.isfinite(gpd_loglik(GpdParams(0.5, 2.0).to_ortho(), [1e6]))
    assert gpd_loglik(GpdParams(0.5, 2.0).to_ortho(), [1e6]) < 0
    assert gpd_loglik(GpdParams(-0.5, 2.0).to_ortho(), [1e6]) == -math.inf
    assert gpd_loglik(GpdOrthoParams(0.0, -1.0), [1.0]) == -math.inf


def test_loglik_matches_scipy_logpdf():
    y = np.array([0.1, 1.0, 7.5, 40.0])
    for xi, beta in ((0.3, 2.0), (-0.2, 15.0), (2.0, 0.5)):
        ours = gpd_loglik(GpdParams(xi, beta).to_ortho(), y)
        assert ours == pytest.approx(stats.genpareto.logpdf(y, xi, scale=beta).sum(), rel=1e-12)


def test_loglik_maximised_near_truth_against_grid_search():
    rng = np.random.default_rng(7)
    y = gpd_sample(GpdParams(0.3, 2.0), 1000, rng)
    nus = np.linspace(0.0, 2.0, 201)
    xis = np.linspace(-0.2, 0.8, 201)
    grid = np.array([[gpd_loglik(GpdOrthoParams(n, x), y) for x in xis] for n in nus])
    i, j = np.unravel_index(np.argmax(grid), grid.shape)
    best = GpdOrthoParams(nus[i], xis[j]).to_standard()
    assert abs(best.xi - 0.3) < 0.15
    assert abs(best.beta - 2.0) < 0.4


def test_sampling():
    params = GpdParams(0.0, 2.0)
    assert gpd_sample(params, 0, np.random.default_rng(1)).size == 0
    a = gpd_sample(params, 10, np.random.default_rng(1))
    b = gpd_sample(params, 10, np.random.default_rng(1))
    assert np.array_equal(a, b)
    big = gpd_sample(params, 100_000, np.random.default_rng(2))
    assert abs(big.mean() - 2.0) < 3 * 2.0 / math.sqrt(big.size)


@pytest.mark.parametrize("xi", [0.0, 0.3, 0.7])
def test_mean_matches_monte_carlo(xi):
    params = GpdParams(xi, 1.5)
    draws = gpd_sample(params, 1_000_000, np.random.default_rng(int(xi * 10)))
    se = draws.std() / math.sqrt(draws.size)
    assert abs(draws.mean() - gpd_mean(params)) < 3 * se


def test_poisson_pmf():
    assert poisson_pmf(PoissonParams(1.0), 0) == pytest.approx(math.exp(-1), rel=1e-14)
    assert poisson_pmf(PoissonParams(2.0), 2) == pytest.approx(2 * math.exp(-2), rel=1e-14)
    total = poisson_pmf(PoissonParams(7.3), np.arange(200)).sum()
    assert total == pytest.approx(1.0, abs=1e-12)


def test_poisson_sampling_moment():
    draws = poisson_sample(PoissonParams(5.0), np.random.default_rng(3), size=100_000)
    assert abs(draws.mean() - 5.0) < 3 * math.sqrt(5 / 1e5)


@settings(max_examples=200, deadline=None)
@given(xi=st.floats(-0.99, 5.0), log_beta=st.floats(math.log(1e-6), math.log(1e9)))
def test_ortho_round_trip(xi, log_beta):
    p = GpdParams(xi, math.exp(log_beta))
    back = p.to_ortho().to_standard()
    assert back.xi == p.xi
    assert back.beta == pytest.approx(p.beta, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    xi=st.floats(-0.9, 3.0),
    beta=st.floats(1e-3, 1e4),
    p=st.floats(0.0, 0.999999),
)
def test_cdf_quantile_inverse(xi, beta, p):
    params = GpdParams(xi, beta)
    assert gpd_cdf(params, gpd_quantile(params, p)) == pytest.approx(p, abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(beta=st.floats(0.1, 100.0), frac=st.floats(0.0, 10.0))
def test_cdf_continuous_across_zero(beta, frac):
    y = frac * beta
    at0 = gpd_cdf(GpdParams(0.0, beta), y)
    for eps in (1e-9, -1e-9):
        assert abs(gpd_cdf(GpdParams(eps, beta), y) - at0) < 1e-7


@settings(max_examples=50, deadline=None)
@given(nu=st.floats(-1.0, 3.0), xi=st.floats(-0.4, 2.0), seed=st.integers(0, 2**32 - 1))
def test_loglik_gradient_matches_finite_differences(nu, xi, seed):
    y = np.random.default_rng(seed).exponential(2.0, size=30)
    params = GpdOrthoParams(nu, xi)
    if not math.isfinite(gpd_loglik(params, y * 0.5)):
        return
    y = y * 0.5
    g = gpd_loglik_grad(params, y)
    h = 1e-6
    num = np.array([
        (gpd_loglik(GpdOrthoParams(nu + h, xi), y) - gpd_loglik(GpdOrthoParams(nu - h, xi), y)) / (2 * h),
        (gpd_loglik(GpdOrthoParams(nu, xi + h), y) - gpd_loglik(GpdOrthoParams(nu, xi - h), y)) / (2 * h),
    ])
    if not np.all(np.isfinite(num)):
        return
    np.testing.assert_allclose(g, num, rtol=1e-5, atol=1e-5 * max(1.0, np.abs(num).max()))
