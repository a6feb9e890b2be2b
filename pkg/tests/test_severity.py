import math
import warnings

import numpy as np
import pytest
from scipy import stats

from disastertoll.calibration import (
    PUBLISHED_SEVERITY,
    calibrated_dataset,
    published_severity_fit,
    published_severity_spec,
)
from disastertoll.data_model import SeveritySample
from disastertoll.design import design_matrix
from disastertoll.distributions import GpdParams, gpd_loglik, gpd_sample
from disastertoll.errors import BoundaryError, DegenerateDataError, DomainError
from disastertoll.pipeline import prepare_inputs
from disastertoll.severity import (
    BoundaryWarning,
    SeverityFit,
    SeveritySpec,
    fit_severity,
    params_grid,
    severity_loglik,
    severity_params_at,
)


def _iid_sample(y, region="EAP", year=2000, log_gdp=9.0):
    n = len(y)
    return SeveritySample(
        np.asarray(y, float), np.full(n, year), np.full(n, region), np.full(n, log_gdp), np.full(n, 1.4)
    )


@pytest.fixture(scope="module")
def iid_fit(panel):
    y = gpd_sample(GpdParams(0.3, 2.0), 5000, np.random.default_rng(42))
    return y, fit_severity(_iid_sample(y), panel, SeveritySpec("flood"))


@pytest.fixture(scope="module")
def flood_fit(flood_inputs):
    with warnings.catch_warnings():
        warnings.simplefilter("error", BoundaryWarning)
        return fit_severity(flood_inputs.samples["flood"], flood_inputs.panel, published_severity_spec("flood"))


def test_intercept_only_recovery(iid_fit):
    _, fit = iid_fit
    params = severity_params_at(fit, {"region": "EAP", "log_gdp": 9.0})
    assert abs(params.xi - 0.3) < 0.05
    assert abs(params.beta - 2.0) < 0.1


def test_intercept_only_matches_scipy_mle(iid_fit):
    y, fit = iid_fit
    xi, _, beta = stats.genpareto.fit(y, floc=0.0)
    params = severity_params_at(fit, {"region": "EAP", "log_gdp": 9.0})
    assert params.xi == pytest.approx(xi, abs=2e-4)
    assert params.beta == pytest.approx(beta, rel=2e-4)
    assert fit.loglik >= stats.genpareto.logpdf(y, xi, scale=beta).sum() - 1e-6


def test_reported_loglik_equals_summed_kernel(flood_fit, flood_inputs):
    s = flood_inputs.samples["flood"]
    xi, beta = params_grid(flood_fit, s.region, s.log_gdp, s.log_co2)
    total = sum(gpd_loglik(GpdParams(a, b).to_ortho(), [y]) for a, b, y in zip(xi, beta, s.deaths))
    assert flood_fit.loglik == pytest.approx(total, abs=1e-8 * abs(total))
    assert flood_fit.loglik == pytest.approx(stats.genpareto.logpdf(s.deaths, xi, scale=beta).sum(), rel=1e-10)


def test_recovers_published_flood_coefficients(flood_fit):
    truth = published_severity_fit("flood")
    est = np.concatenate([flood_fit.nu_coefficients, flood_fit.xi_coefficients])
    ref = np.concatenate([truth.nu_coefficients, truth.xi_coefficients])
    z = (est - ref) / flood_fit.std_errors
    names = flood_fit.nu_columns + flood_fit.xi_columns
    assert np.all(np.abs(z) < 3), {n: round(v, 2) for n, v in zip(names, z) if abs(v) >= 3}
    nu_named = dict(zip(truth.nu_columns, truth.nu_coefficients))
    xi_named = dict(zip(truth.xi_columns, truth.xi_coefficients))
    assert nu_named["intercept"] == 13.748 and nu_named["log_gdp:region[EAP]"] == -1.090
    assert xi_named["intercept"] == 4.108 and xi_named["log_gdp:region[EAP]"] == -0.379
    assert len(flood_fit.warnings) == 0


def test_log1p_link_keeps_tail_above_minus_one(panel):
    y = gpd_sample(GpdParams(-0.2, 5.0), 3000, np.random.default_rng(3))
    fit = fit_severity(_iid_sample(y), panel, SeveritySpec("flood", xi_link="log1p"))
    xi = math.expm1(fit.xi_coefficients[0])
    assert xi > -1
    # delta method: d xi / d eta = 1 + xi
    se = (1 + xi) * fit.xi_std_errors[0]
    assert abs(xi + 0.2) < 3 * se


def test_links_agree_on_intercept_only_fit(panel):
    y = gpd_sample(GpdParams(0.1, 3.0), 2000, np.random.default_rng(9))
    a = fit_severity(_iid_sample(y), panel, SeveritySpec("flood"))
    b = fit_severity(_iid_sample(y), panel, SeveritySpec("flood", xi_link="log1p"))
    assert a.loglik == pytest.approx(b.loglik, abs=1e-6)


def test_gradient_matches_finite_differences(flood_inputs):
    s = flood_inputs.samples["flood"]
    spec = published_severity_spec("flood")
    X_nu = design_matrix(spec.nu_terms, s.covariate_rows())
    X_xi = design_matrix(spec.xi_terms, s.covariate_rows())
    truth = published_severity_fit("flood")
    center = np.concatenate([truth.nu_coefficients, truth.xi_coefficients])
    rng = np.random.default_rng(1)
    checked = 0
    for link in ("identity", "log1p"):
        base = center.copy()
        if link == "log1p":
            base[len(truth.nu_coefficients)] = math.log1p(max(base[len(truth.nu_coefficients)], 0.0))
            base[len(truth.nu_coefficients) + 1:] *= 0.2
        while checked < (10 if link == "identity" else 20):
            theta = base + rng.normal(scale=0.01, size=base.size)
            value, grad = severity_loglik(theta, X_nu, X_xi, s.deaths, link, order=1)
            if not math.isfinite(value):
                continue
            h = 1e-6
            num = np.empty_like(theta)
            for j in range(theta.size):
                e = np.zeros_like(theta)
                e[j] = h
                num[j] = (severity_loglik(theta + e, X_nu, X_xi, s.deaths, link)
                          - severity_loglik(theta - e, X_nu, X_xi, s.deaths, link)) / (2 * h)
            assert np.all(np.abs(grad - num) / np.maximum(np.abs(num), 1.0) < 1e-5)
            checked += 1


def test_hessian_matches_gradient_differences(panel):
    y = gpd_sample(GpdParams(0.4, 2.0), 500, np.random.default_rng(5))
    X = np.ones((500, 1))
    theta = np.array([1.1, 0.35])
    _, _, hess = severity_loglik(theta, X, X, y, "identity", order=2)
    h = 1e-6
    num = np.column_stack([
        (severity_loglik(theta + h * e, X, X, y, order=1)[1] - severity_loglik(theta - h * e, X, X, y, order=1)[1]) / (2 * h)
        for e in np.eye(2)
    ])
    np.testing.assert_allclose(hess, num, rtol=1e-5, atol=1e-4)


def test_orthogonal_parametrisation_decouples_information(iid_fit):
    y, fit = iid_fit
    params = severity_params_at(fit, {"region": "EAP", "log_gdp": 9.0})

    def corr(f, x):
        h = 1e-4
        H = np.empty((2, 2))
        for i in range(2):
            for j in range(2):
                ei, ej = np.eye(2)[i] * h, np.eye(2)[j] * h
                H[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h * h)
        return abs(H[0, 1]) / math.sqrt(H[0, 0] * H[1, 1])

    ortho = lambda t: stats.genpareto.logpdf(y, t[1], scale=math.exp(t[0]) / (1 + t[1])).sum()
    plain = lambda t: stats.genpareto.logpdf(y, t[1], scale=t[0]).sum()
    nu = math.log((1 + params.xi) * params.beta)
    assert corr(ortho, np.array([nu, params.xi])) < corr(plain, np.array([params.beta, params.xi]))


def test_fit_invariant_to_event_order(flood_inputs, flood_fit):
    s = flood_inputs.samples["flood"]
    perm = np.random.default_rng(0).permutation(len(s))
    shuffled = SeveritySample(*(np.asarray(a)[perm] for a in (s.deaths, s.year, s.region, s.log_gdp, s.log_co2)))
    again = fit_severity(shuffled, flood_inputs.panel, published_severity_spec("flood"))
    np.testing.assert_allclose(again.nu_coefficients, flood_fit.nu_coefficients, rtol=1e-6, atol=1e-7)
    np.testing.assert_allclose(again.xi_coefficients, flood_fit.xi_coefficients, rtol=1e-6, atol=1e-7)
    assert again.loglik == pytest.approx(flood_fit.loglik, rel=1e-10)


def test_params_at_trivial_values():
    spec = SeveritySpec("flood")
    fit = SeverityFit.from_coefficients(spec, [0.0], [0.0])
    assert severity_params_at(fit, {"region": "EAP", "log_gdp": 9.0}).beta == 1.0
    fit = SeverityFit.from_coefficients(spec, [math.log(6.0)], [0.5])
    assert severity_params_at(fit, {"region": "EAP", "log_gdp": 9.0}).beta == pytest.approx(4.0, rel=1e-14)


def test_heat_wave_eca_tail_index():
    fit = published_severity_fit("heat_wave")
    xi = dict(zip(fit.xi_columns, fit.xi_coefficients))
    assert xi["intercept"] + xi["region[ECA]"] == pytest.approx(2.545, abs=1e-12)
    params = severity_params_at(fit, {"region": "ECA", "log_gdp": 10.0})
    assert params.xi == pytest.approx(2.545, abs=1e-12)
    assert params.xi >= 1


def test_params_at_boundary_error():
    fit = SeverityFit.from_coefficients(SeveritySpec("flood"), [0.0], [-1.2])
    with pytest.raises(BoundaryError):
        severity_params_at(fit, {"region": "EAP", "log_gdp": 9.0})


def test_non_positive_deaths_rejected(panel):
    with pytest.raises(DomainError):
        fit_severity(_iid_sample([1.0, 0.0] * 20), panel, SeveritySpec("flood"))


def test_too_few_events(panel):
    with pytest.raises(DegenerateDataError):
        fit_severity(_iid_sample([1.0, 2.0, 3.0]), panel, SeveritySpec("flood"))


def test_boundary_stall_is_accepted_and_flagged():
    data = calibrated_dataset(seed=5, types=("heat_wave",), counts="fixed")
    inputs = prepare_inputs(data.events, data.covariates, (1960, 2019), 2019, ("heat_wave",))
    with pytest.warns(BoundaryWarning, match="towards xi = -1"):
        fit = fit_severity(inputs.samples["heat_wave"], inputs.panel, published_severity_spec("heat_wave"))
    assert fit.warnings
    assert math.isfinite(fit.loglik)


def test_json_round_trip(flood_fit):
    back = SeverityFit.from_dict(flood_fit.to_dict())
    np.testing.assert_array_equal(back.nu_coefficients, flood_fit.nu_coefficients)
    np.testing.assert_array_equal(back.xi_coefficients, flood_fit.xi_coefficients)
    assert back.spec == flood_fit.spec


def test_calibration_table_is_consistent():
    for kind, doc in PUBLISHED_SEVERITY.items():
        fit = published_severity_fit(kind)
        assert fit.spec.xi_link == ("log1p" if kind == "cold_wave" else "identity")
