"""Published coefficient tables, synthetic covariates and a synthetic event generator.

The real event database is licensed, so everything that needs "realistic"
data runs on synthetic histories drawn from the published estimates. The
covariate paths below are stylised (smooth curves through a handful of
levels) and only meant to put the covariates in the right range.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .data_model import (
    CO2_PC,
    GDP_PC,
    POPULATION,
    CovariateSeries,
    Covariates,
    DisasterEvent,
    fractional_year,
)
from .frequency import FrequencyFit, FrequencySpec
from .projection import ScenarioPath
from .regions import DISASTER_TYPES, REGIONS, WORLD
from .severity import SeverityFit, SeveritySpec

# ---------------------------------------------------------------------------
# estimates (log-link Poisson intensity; GPD in (nu, xi))

FREQUENCY_TERMS = ("intercept", "log_co2:region")

# intercept, then one log CO2 slope per region in REGIONS order
PUBLISHED_FREQUENCY = {
    "flood": (-5.141, (5.610, 5.243, 5.421, 4.644, 4.439, 5.214, 5.418)),
    "storm": (-2.231, (3.768, 3.062, 3.145, 1.713, 3.169, 2.850, 2.556)),
    "landslide": (-4.044, (3.747, 3.168, 3.485, 1.699, 1.217, 3.338, 2.757)),
    "wildfire": (-1.394, (1.436, 1.498, 0.973, -0.183, 1.417, -0.274, 0.539)),
    "heat_wave": (-4.146, (2.628, 3.275, 1.717, 1.654, 2.340, 2.809, 1.026)),
    "cold_wave": (-7.780, (4.693, 6.247, 5.467, 4.258, 4.462, 5.545, 3.608)),
}

PUBLISHED_FREQUENCY_SE = {
    "flood": (0.228, (0.154, 0.155, 0.155, 0.159, 0.161, 0.156, 0.155)),
}

WATER_NU = ("intercept", "region", "log_gdp:region")
WATER_XI = ("intercept", "log_gdp:region")
OTHER_NU = ("intercept", "log_gdp:region")
OTHER_XI = ("intercept", "region")

# coefficient vectors follow design.column_names order:
# intercept, region[ECA..SSF], log_gdp:region[EAP..SSF]
PUBLISHED_SEVERITY = {
    "flood": dict(
        nu_terms=WATER_NU, xi_terms=WATER_XI, xi_link="identity",
        nu=(13.748, 20.051, 23.051, 18.951, 22.508, 2.730, -0.113,
            -1.090, -3.079, -3.522, -3.063, -3.131, -1.446, -1.251),
        xi=(4.108, -0.379, -0.350, -0.366, -0.384, -0.375, -0.425, -0.436),
    ),
    "storm": dict(
        nu_terms=WATER_NU, xi_terms=WATER_XI, xi_link="identity",
        nu=(14.536, 17.899, 14.969, 15.205, 16.772, 3.426, -5.568,
            -1.222, -2.984, -2.804, -2.777, -2.624, -1.672, -0.669),
        xi=(4.204, -0.370, -0.396, -0.325, -0.387, -0.355, -0.422, -0.405),
    ),
    "landslide": dict(
        nu_terms=WATER_NU, xi_terms=WATER_XI, xi_link="identity",
        nu=(9.523, 13.143, 23.429, 6.216, 47.377, 6.166, 5.867,
            -0.613, -1.894, -3.028, -1.319, -5.154, -1.402, -1.411),
        xi=(0.289, 0.002, 0.009, 0.013, -0.096, -0.114, -0.003, 0.041),
    ),
    "wildfire": dict(
        nu_terms=OTHER_NU, xi_terms=OTHER_XI, xi_link="identity",
        nu=(10.532, -0.853, -0.780, -0.824, -0.845, -0.809, -11.452, -0.939),
        xi=(1.034, -0.677, -0.899, -1.777, -0.480, -1.978, -0.790),
    ),
    "heat_wave": dict(
        nu_terms=OTHER_NU, xi_terms=OTHER_XI, xi_link="identity",
        nu=(5.365, -0.136, -0.095, -0.029, -0.222, -0.031, 0.075, -0.374),
        xi=(0.581, 1.964, -0.574, -1.324, -0.014, -0.162, -1.455),
    ),
    # tail index fitted on the log(1 + xi) scale
    "cold_wave": dict(
        nu_terms=OTHER_NU, xi_terms=OTHER_XI, xi_link="log1p",
        nu=(18.380, -1.620, -1.473, -1.520, -1.811, -1.491, -1.654, -10.968),
        xi=(0.566, 0.041, 0.066, -3.131, -2.943, -0.360, -3.367),
    ),
}

PUBLISHED_SEVERITY_SE = {
    "flood": dict(
        nu=(1.364, 5.977, 4.368, 5.500, 7.091, 2.133, 5.785,
            0.150, 0.570, 0.438, 0.563, 0.645, 0.203, 0.695),
        xi=(0.439, 0.048, 0.043, 0.047, 0.047, 0.041, 0.055, 0.055),
    ),
}

PUBLISHED_SEVERITY_LOGLIK = {
    "flood": -17825.8, "storm": -13833.0, "landslide": -3513.5,
    "wildfire": -645.0, "heat_wave": -1119.8, "cold_wave": -1470.0,
}

# world disasters per year over 1960-2019, and events with positive deaths
WORLD_RATE_1960_2019 = {
    "flood": 84.0, "storm": 66.6, "landslide": 11.8,
    "wildfire": 7.25, "heat_wave": 3.37, "cold_wave": 6.33,
}
POSITIVE_DEATH_EVENTS = {
    "flood": 3658, "storm": 2916, "landslide": 672,
    "wildfire": 178, "heat_wave": 176, "cold_wave": 294,
}

# nu ladder / xi ladder log-likelihoods for floods
FLOOD_NU_LADDER = (-18468.0, -18127.5, -18139.5, -17912.3, -17849.1)
FLOOD_XI_LADDER = (-17849.1, -17839.6, -17839.1, -17825.8, -17820.5)


def published_frequency_fit(disaster_type: str, window=(1960, 2019)) -> FrequencyFit:
    const, slopes = PUBLISHED_FREQUENCY[disaster_type]
    spec = FrequencySpec(disaster_type, FREQUENCY_TERMS, window)
    return FrequencyFit.from_coefficients(spec, (const, *slopes))


def published_severity_spec(disaster_type: str, window=(1960, 2019)) -> SeveritySpec:
    t = PUBLISHED_SEVERITY[disaster_type]
    return SeveritySpec(disaster_type, t["nu_terms"], t["xi_terms"], t["xi_link"], window)


def published_severity_fit(disaster_type: str, window=(1960, 2019)) -> SeverityFit:
    t = PUBLISHED_SEVERITY[disaster_type]
    return SeverityFit.from_coefficients(published_severity_spec(disaster_type, window), t["nu"], t["xi"])


def published_fits(window=(1960, 2019)) -> dict[str, tuple[FrequencyFit, SeverityFit]]:
    return {k: (published_frequency_fit(k, window), published_severity_fit(k, window)) for k in DISASTER_TYPES}


# ---------------------------------------------------------------------------
# synthetic covariates

# world CO2 per capita (t): knots joined linearly; averages about 4.11 over
# 1980-1999 and 4.61 over 2000-2019
CO2_KNOTS = ((1960, 3.10), (1970, 3.95), (1979, 4.40), (1985, 4.05), (1990, 4.20),
             (1999, 3.95), (2005, 4.40), (2012, 4.95), (2019, 4.75), (2020, 4.45))

# regional GDP per capita (PPP), geometric between 1960 and 2019
GDP_ENDPOINTS = {
    "EAP": (1500.0, 17500.0), "ECA": (9000.0, 35000.0), "LAC": (7000.0, 16500.0),
    "MNA": (6000.0, 19000.0), "NAC": (20000.0, 62000.0), "SAS": (1000.0, 6300.0),
    "SSF": (2500.0, 3900.0),
}

# a few real country codes per region: (1960 population, 2019 population)
COUNTRIES = {
    "EAP": {"CHN": (667e6, 1398e6), "IDN": (88e6, 271e6), "PHL": (26e6, 108e6)},
    "ECA": {"DEU": (73e6, 83e6), "FRA": (47e6, 67e6), "TUR": (28e6, 83e6)},
    "LAC": {"BRA": (72e6, 211e6), "MEX": (38e6, 128e6), "HTI": (3.9e6, 11.3e6)},
    "MNA": {"EGY": (27e6, 100e6), "IRN": (22e6, 83e6), "MAR": (12e6, 36e6)},
    "NAC": {"USA": (181e6, 328e6), "CAN": (18e6, 38e6)},
    "SAS": {"IND": (450e6, 1366e6), "BGD": (48e6, 163e6), "PAK": (45e6, 217e6)},
    "SSF": {"NGA": (45e6, 201e6), "ETH": (22e6, 112e6), "MOZ": (7.5e6, 30e6)},
}

HISTORY = (1960, 2019)
# population runs one year past the window so late-2019 events can be rescaled
POPULATION_LAST_YEAR = 2020


def _geometric(a: float, b: float, years: range, y0: int, y1: int) -> dict[int, float]:
    g = (b / a) ** (1.0 / (y1 - y0))
    return {y: a * g ** (y - y0) for y in years}


def synthetic_covariates() -> Covariates:
    """World CO2, regional GDP and country/regional population series."""
    years = range(HISTORY[0], HISTORY[1] + 2)
    kx, ky = zip(*CO2_KNOTS)
    series = [CovariateSeries(CO2_PC, WORLD, {y: float(np.interp(y, kx, ky)) for y in years}, "t per capita")]
    for r, (a, b) in GDP_ENDPOINTS.items():
        series.append(CovariateSeries(GDP_PC, r, _geometric(a, b, years, *HISTORY), "PPP 2017 USD"))
    pop_years = range(HISTORY[0], POPULATION_LAST_YEAR + 1)
    for r, members in COUNTRIES.items():
        total = {y: 0.0 for y in pop_years}
        for code, (a, b) in members.items():
            obs = _geometric(a, b, pop_years, *HISTORY)
            series.append(CovariateSeries(POPULATION, code, obs, "persons"))
            for y, v in obs.items():
                total[y] += v
        series.append(CovariateSeries(POPULATION, r, total, "persons"))
    return Covariates(tuple(series))


# ---------------------------------------------------------------------------
# an SSP-style scenario path

REFERENCE_YEAR = 2019

# 2040 levels implied by the published SSP1 regional flood projections:
# CO2 from a least-squares fit of the seven regional counts to the flood
# intensity; regional GDP solved so the mean flood toll per disaster matches
# each regional cell under the assumed population ratios below.
SSP1_LIKE_2040_CO2 = 4.974915
SSP1_LIKE_2040_GDP = {
    "EAP": 42527.14, "ECA": 51474.86, "LAC": 28934.20, "MNA": 28135.15,
    "NAC": 87696.40, "SAS": 18679.95, "SSF": 8846.91,
}
SSP1_LIKE_POP_RATIO_2040 = {
    "EAP": 0.99, "ECA": 1.01, "LAC": 1.10, "MNA": 1.25, "NAC": 1.12, "SAS": 1.12, "SSF": 1.55,
}
SSP1_LIKE_CO2_SHAPE = ((2019, None), (2030, 5.05), (2040, SSP1_LIKE_2040_CO2), (2060, 3.90), (2080, 2.80), (2100, 1.60))

# scenario base-year levels differ from the observed 2019 values by these
# factors (the published paths start from older data)
SCENARIO_DISCREPANCY = {CO2_PC: 1.04, GDP_PC: 0.93, POPULATION: 0.98}


def ssp1_like_path(covariates: Covariates | None = None, first_year: int = 2015, last_year: int = 2100) -> ScenarioPath:
    """Raw (un-spliced) SSP1-style path; splice it with :func:`projection.splice_path`.

    After splicing to the synthetic 2019 observations it passes through the
    2040 levels above.
    """
    covariates = covariates or synthetic_covariates()
    years = range(first_year, last_year + 1)
    co2_2019 = covariates.get(CO2_PC, WORLD).value(REFERENCE_YEAR)
    kx = [2019] + [k for k, _ in SSP1_LIKE_CO2_SHAPE[1:]]
    ky = np.log([co2_2019] + [v for _, v in SSP1_LIKE_CO2_SHAPE[1:]])
    slope0 = (ky[1] - ky[0]) / (kx[1] - kx[0])
    spliced_co2 = {}
    for y in years:
        spliced_co2[y] = float(np.exp(ky[0] + slope0 * (y - 2019) if y < 2019 else np.interp(y, kx, ky)))
    d = SCENARIO_DISCREPANCY
    co2 = {y: v * d[CO2_PC] for y, v in spliced_co2.items()}
    gdp, pop = {}, {}
    for r in REGIONS:
        g19 = covariates.get(GDP_PC, r).value(REFERENCE_YEAR)
        p19 = covariates.get(POPULATION, r).value(REFERENCE_YEAR)
        g_rate = (SSP1_LIKE_2040_GDP[r] / g19) ** (1 / 21)
        p_rate = SSP1_LIKE_POP_RATIO_2040[r] ** (1 / 21)
        for y in years:
            if y <= 2040:
                gv, pv = g19 * g_rate ** (y - 2019), p19 * p_rate ** (y - 2019)
            else:
                gv = SSP1_LIKE_2040_GDP[r] * (1 + 0.5 * (g_rate - 1)) ** (y - 2040)
                pv = p19 * SSP1_LIKE_POP_RATIO_2040[r] * 0.997 ** (y - 2040)
            gdp[(y, r)] = gv * d[GDP_PC]
            pop[(y, r)] = pv * d[POPULATION]
    return ScenarioPath("SSP1-like", co2, gdp, pop, first_year)


# ---------------------------------------------------------------------------
# synthetic events


@dataclass(frozen=True)
class SyntheticDataset:
    events: list[DisasterEvent]
    covariates: Covariates
    rescaled: np.ndarray  # generator-scale deaths, aligned with ``events``


def _cell_grid(covariates: Covariates, window):
    years = np.repeat(np.arange(window[0], window[1] + 1), len(REGIONS))
    regions = np.tile(np.array(REGIONS), window[1] - window[0] + 1)
    co2 = covariates.get(CO2_PC, WORLD)
    log_co2 = np.log([co2.value(y) for y in years])
    log_gdp = np.log([covariates.get(GDP_PC, r).value(y) for y, r in zip(years, regions)])
    return {"year": years, "region": regions, "log_co2": log_co2, "log_gdp": log_gdp}


def simulate_events(
    fits: dict[str, tuple[FrequencyFit, SeverityFit]],
    covariates: Covariates,
    rng: np.random.Generator,
    window=HISTORY,
    counts: str = "poisson",
    totals: dict[str, int] | None = None,
    positive_share: dict[str, float] | None = None,
    reference_year: int = REFERENCE_YEAR,
) -> SyntheticDataset:
    """Draw an event history from frequency and severity fits.

    ``counts="poisson"`` draws each (year, region) count from its Poisson
    intensity. ``counts="fixed"`` allocates exactly ``totals[type]`` events
    across cells in proportion to the intensities. A share
    ``positive_share[type]`` of events (default all) get GPD deaths on the
    reference-year population scale; the rest have zero deaths. Recorded
    deaths are divided back by the country population ratio, so rescaling
    the written events recovers the generator draws.
    """
    from .distributions import gpd_quantile_array  # local: keeps import graph flat

    cells = _cell_grid(covariates, window)
    pops = {c: covariates.get(POPULATION, c) for m in COUNTRIES.values() for c in m}
    events, rescaled = [], []
    for kind, (ffit, sfit) in fits.items():
        lam = ffit.lambda_at(cells)
        if counts == "poisson":
            n = rng.poisson(lam)
        elif counts == "fixed":
            n = rng.multinomial(int(totals[kind]), lam / lam.sum())
        else:
            raise ValueError(f"unknown counts mode {counts!r}")
        idx = np.repeat(np.arange(len(lam)), n)
        m = len(idx)
        share = 1.0 if positive_share is None else positive_share.get(kind, 1.0)
        positive = np.zeros(m, dtype=bool)
        positive[rng.choice(m, size=int(round(share * m)), replace=False)] = True
        nu, xi = sfit.linear_predictors({k: v[idx] for k, v in cells.items()})
        beta = np.exp(nu - np.log1p(xi))
        draws = np.where(positive, gpd_quantile_array(xi, beta, rng.random(m)), 0.0)
        # a draw of exactly zero would be dropped from the severity data
        draws = np.where(positive & (draws <= 0), np.finfo(float).tiny, draws)
        day = rng.integers(0, 365, size=m)
        pick = rng.random(m)
        for j in range(m):
            year, region = int(cells["year"][idx[j]]), str(cells["region"][idx[j]])
            codes = list(COUNTRIES[region])
            country = codes[min(int(pick[j] * len(codes)), len(codes) - 1)]
            date = dt.date(year, 1, 1) + dt.timedelta(days=int(day[j]))
            pop = pops[country]
            ratio = float(pop._interpolant(fractional_year(date))) / pop.value(reference_year)
            deaths = float(draws[j]) * ratio
            events.append(DisasterEvent(f"{kind}-{len(events)}", date, country, region, kind, deaths))
            rescaled.append(float(draws[j]))
    order = sorted(range(len(events)), key=lambda i: (events[i].date, events[i].event_id))
    return SyntheticDataset([events[i] for i in order], covariates, np.asarray(rescaled)[order])


def calibrated_dataset(seed: int = 0, types=DISASTER_TYPES, counts: str = "poisson") -> SyntheticDataset:
    """Synthetic 1960-2019 history from the published estimates.

    With ``counts="fixed"`` the world totals match the published per-year
    averages exactly and the number of positive-death events matches the
    published sample sizes.
    """
    cov = synthetic_covariates()
    fits = {k: v for k, v in published_fits().items() if k in types}
    totals = {k: int(round(WORLD_RATE_1960_2019[k] * 60)) for k in types}
    share = {k: POSITIVE_DEATH_EVENTS[k] / totals[k] for k in types}
    rng = np.random.default_rng(seed)
    return simulate_events(fits, cov, rng, counts=counts, totals=totals, positive_share=share)
