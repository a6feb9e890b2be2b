import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disastertoll.calibration import published_fits, published_frequency_fit, published_severity_fit, ssp1_like_path
from disastertoll.distributions import GpdParams
from disastertoll.errors import BoundaryError, CoverageError
from disastertoll.frequency import FrequencyFit, FrequencySpec
from disastertoll.projection import (
    ScenarioPath,
    deaths_statistic,
    load_scenarios,
    project,
    project_annual_toll,
    project_counts,
    project_deaths,
    splice_path,
    write_scenarios,
)
from disastertoll.regions import REGIONS
from disastertoll.severity import SeverityFit, SeveritySpec


def _flat_path(co2=4.0, gdp=10_000.0, pop=1e8, years=range(2015, 2101), name="flat"):
    return ScenarioPath(
        name,
        {y: co2 for y in years},
        {(y, r): gdp for y in years for r in REGIONS},
        {(y, r): pop for y in years for r in REGIONS},
        years[0],
    )


@pytest.fixture(scope="module")
def spliced(covariates):
    return splice_path(ssp1_like_path(covariates), covariates)


def test_unchanged_co2_keeps_lambda_constant():
    fit = published_frequency_fit("flood")
    counts = project_counts(fit, _flat_path(), (2040, 2060, 2100))
    for r in REGIONS:
        assert counts[(r, 2040)] == counts[(r, 2060)] == counts[(r, 2100)]


def test_co2_ratio_scaling():
    spec = FrequencySpec("flood", ("intercept", "log_co2"))
    slope = 5.61
    fit = FrequencyFit.from_coefficients(spec, [math.log(17.3) - slope * math.log(4.11), slope], regions=("EAP",))
    years = range(2019, 2041)
    path = ScenarioPath("x", {y: 4.11 * 1.1216 if y == 2040 else 4.11 for y in years},
                        {(y, "EAP"): 1.0 for y in years}, {(y, "EAP"): 1.0 for y in years}, 2019)
    counts = project_counts(fit, path, (2019, 2040))
    assert counts[("EAP", 2019)] == pytest.approx(17.3, rel=1e-14)
    assert counts[("EAP", 2040)] == pytest.approx(17.3 * 1.1216**5.61, rel=1e-13)


def test_missing_scenario_year():
    with pytest.raises(CoverageError):
        project_counts(published_frequency_fit("flood"), _flat_path(years=range(2015, 2050)), (2060,))


def test_deaths_statistic_examples():
    assert deaths_statistic(GpdParams(0.5, 2.0)) == (4.0, "mean")
    value, tag = deaths_statistic(GpdParams(1.5, 1.0))
    assert tag == "median"
    assert value == pytest.approx((2**1.5 - 1) / 1.5, rel=1e-14)
    assert round(value, 3) == 1.219


def test_mean_median_switch_at_one():
    below, tag_below = deaths_statistic(GpdParams(1 - 1e-9, 1.0))
    assert tag_below == "mean"
    assert math.isfinite(below) and below > 1e8
    _, tag_above = deaths_statistic(GpdParams(1 + 1e-9, 1.0))
    assert tag_above == "median"
    assert deaths_statistic(GpdParams(1.0, 1.0))[1] == "median"


def test_project_deaths_population_ratio():
    fit = SeverityFit.from_coefficients(SeveritySpec("flood"), [math.log(2.0 * 1.5)], [0.5])
    path = _flat_path()
    assert project_deaths(fit, path, "EAP", 2040) == (pytest.approx(4.0, rel=1e-14), "mean")
    grown = ScenarioPath(path.name, path.world_co2_pc, path.regional_gdp_pc,
                         {k: v * (2.0 if k[0] == 2040 else 1.0) for k, v in path.regional_population.items()},
                         path.base_year)
    value, _ = project_deaths(fit, grown, "EAP", 2040)
    assert value == pytest.approx(8.0, rel=1e-14)


def test_boundary_error_and_flag():
    sev = SeverityFit.from_coefficients(SeveritySpec("flood"), [0.0], [-1.5])
    freq = published_frequency_fit("flood")
    with pytest.raises(BoundaryError):
        project_deaths(sev, _flat_path(), "EAP", 2040)
    with pytest.raises(BoundaryError):
        project({"flood": (freq, sev)}, _flat_path(), (2040,))
    table = project({"flood": (freq, sev)}, _flat_path(), (2040,), on_boundary="flag")
    assert table.get("flood", "EAP", 2040).deaths_stat == "boundary"
    world = table.get("flood", "WLD", 2040)
    assert world.n_disasters == 0.0
    assert math.isnan(world.deaths_per_disaster)


def test_annual_toll_examples():
    table = project_annual_toll({("EAP", 2040): 10.0}, {("EAP", 2040): (5.0, "mean")})
    assert table.get("", "EAP", 2040).annual_deaths == 50.0
    table = project_annual_toll({("EAP", 2040): 0.0, ("SAS", 2040): 2.0},
                                {("EAP", 2040): (5.0, "mean"), ("SAS", 2040): (3.0, "median")})
    assert table.get("", "EAP", 2040).annual_deaths == 0.0
    world = table.get("", "WLD", 2040)
    assert world.annual_deaths == 6.0
    assert world.deaths_stat == "median"


def test_world_flood_row_against_published_projection(spliced):
    table = project(published_fits(), spliced, (2040,), on_boundary="flag")
    world = table.get("flood", "WLD", 2040)
    for value, published in ((world.n_disasters, 186.0), (world.deaths_per_disaster, 7.5),
                             (world.annual_deaths, 1388.9)):
        assert abs(value / published - 1) <= 0.10


def test_heat_wave_eca_uses_median_and_is_starred(spliced):
    table = project(published_fits(), spliced, (2040,), on_boundary="flag")
    row = table.get("heat_wave", "ECA", 2040)
    assert row.deaths_stat == "median"
    text = table.render_text()
    assert f"{row.deaths_per_disaster:>13.1f}*" in text
    assert table.get("heat_wave", "WLD", 2040).deaths_stat == "median"


def test_splice_passes_through_observed_value(covariates):
    raw = ssp1_like_path(covariates)
    spliced = splice_path(raw, covariates)
    from disastertoll.data_model import CO2_PC, GDP_PC, POPULATION

    assert spliced.co2(2019) == pytest.approx(covariates.get(CO2_PC, "WLD").value(2019), rel=1e-14)
    for r in REGIONS:
        assert spliced.gdp(2019, r) == pytest.approx(covariates.get(GDP_PC, r).value(2019), rel=1e-14)
        assert spliced.population(2019, r) == pytest.approx(covariates.get(POPULATION, r).value(2019), rel=1e-14)
        # growth rates are untouched
        assert spliced.gdp(2060, r) / spliced.gdp(2040, r) == pytest.approx(raw.gdp(2060, r) / raw.gdp(2040, r), rel=1e-13)


def test_scenario_csv_holds_several_paths(tmp_path, covariates):
    import dataclasses

    raw = ssp1_like_path(covariates)
    other = dataclasses.replace(raw.scaled(co2=1.1), name="SSP3-like")
    p = tmp_path / "scen.csv"
    write_scenarios([raw, other], p, ["seed=0"])
    assert p.read_text().startswith("# seed=0\n")
    back = load_scenarios(p)
    assert sorted(back) == ["SSP1-like", "SSP3-like"]
    assert back["SSP3-like"].co2(2050) == pytest.approx(1.1 * raw.co2(2050), rel=1e-15)
    assert back["SSP1-like"].base_year == raw.base_year


def test_scenario_csv_values_exact(tmp_path, covariates):
    raw = ssp1_like_path(covariates)
    p = tmp_path / "scen.csv"
    write_scenarios([raw], p)
    back = load_scenarios(p)["SSP1-like"]
    assert back.world_co2_pc == raw.world_co2_pc
    assert back.regional_gdp_pc == raw.regional_gdp_pc
    assert back.regional_population == raw.regional_population


@settings(max_examples=25, deadline=None)
@given(bump=st.floats(1.0, 3.0), kind=st.sampled_from(["flood", "storm", "landslide", "cold_wave"]))
def test_counts_monotone_in_co2_with_positive_sensitivities(bump, kind):
    fit = published_frequency_fit(kind)
    slopes = fit.coefficients[1:]
    if np.any(slopes < 0):
        return
    base = _flat_path()
    up = base.scaled(co2=bump)
    a = project_counts(fit, base, (2040,))
    b = project_counts(fit, up, (2040,))
    assert all(b[k] >= a[k] for k in a)


@settings(max_examples=25, deadline=None)
@given(factor=st.floats(0.1, 10.0), kind=st.sampled_from(["flood", "storm", "heat_wave"]))
def test_population_scaling_is_linear(factor, kind):
    fits = {kind: (published_frequency_fit(kind), published_severity_fit(kind))}
    base = _flat_path(gdp=20_000.0)
    horizon_only = ScenarioPath(base.name, base.world_co2_pc, base.regional_gdp_pc,
                                {k: v * (factor if k[0] == 2060 else 1.0) for k, v in base.regional_population.items()},
                                base.base_year)
    a = project(fits, base, (2060,), on_boundary="flag")
    b = project(fits, horizon_only, (2060,), on_boundary="flag")
    for ra, rb in zip(a, b):
        if ra.deaths_stat == "boundary":
            continue
        assert rb.deaths_per_disaster == pytest.approx(factor * ra.deaths_per_disaster, rel=1e-12)
        assert rb.annual_deaths == pytest.approx(factor * ra.annual_deaths, rel=1e-12)


def test_projection_csv_has_stat_column(spliced):
    table = project(published_fits(), spliced, (2040, 2100), on_boundary="flag")
    csv_text = table.to_csv(["config_sha256=abc", "seed=1"])
    lines = csv_text.splitlines()
    assert lines[:2] == ["# config_sha256=abc", "# seed=1"]
    assert lines[2] == "scenario,disaster_type,region,horizon,n_disasters,deaths_per_disaster,stat,annual_deaths"
    assert len(lines) == 3 + 6 * 2 * 8
