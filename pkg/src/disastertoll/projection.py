"""Projections of disaster counts, deaths per disaster and annual tolls under scenario paths."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .data_model import CO2_PC, GDP_PC, POPULATION, Covariates
from .distributions import INFINITE_MEAN, GpdParams, gpd_mean, gpd_median
from .errors import BoundaryError, CoverageError, DomainError, IngestError
from .frequency import FrequencyFit, predict_lambda
from .regions import REGIONS, WORLD
from .severity import SeverityFit, severity_params_at

DEFAULT_HORIZONS = (2040, 2060, 2080, 2100)


@dataclass(frozen=True, eq=False)
class ScenarioPath:
    """Covariate trajectories for one named scenario."""

    name: str
    world_co2_pc: Mapping[int, float]
    regional_gdp_pc: Mapping[tuple[int, str], float]
    regional_population: Mapping[tuple[int, str], float]
    base_year: int

    def __post_init__(self):
        last = max(self.world_co2_pc)
        years = range(self.base_year, last + 1)
        missing = [y for y in years if y not in self.world_co2_pc]
        if missing:
            raise CoverageError(f"scenario {self.name}: {CO2_PC} missing years {missing[:5]}")
        for label, table in (("gdp_pc", self.regional_gdp_pc), ("population", self.regional_population)):
            regions = sorted({r for _, r in table})
            for r in regions:
                gaps = [y for y in years if (y, r) not in table]
                if gaps:
                    raise CoverageError(f"scenario {self.name}: {label}/{r} missing years {gaps[:5]}")
        for label, values in (
            ("co2_pc", self.world_co2_pc.values()),
            ("gdp_pc", self.regional_gdp_pc.values()),
            ("population", self.regional_population.values()),
        ):
            if not all(v > 0 and math.isfinite(v) for v in values):
                raise DomainError(f"scenario {self.name}: {label} values must be positive and finite")

    @property
    def last_year(self) -> int:
        return max(self.world_co2_pc)

    def co2(self, year: int) -> float:
        try:
            return self.world_co2_pc[year]
        except KeyError:
            raise CoverageError(f"scenario {self.name} has no {CO2_PC} for {year}") from None

    def gdp(self, year: int, region: str) -> float:
        try:
            return self.regional_gdp_pc[(year, region)]
        except KeyError:
            raise CoverageError(f"scenario {self.name} has no {GDP_PC} for {region} {year}") from None

    def population(self, year: int, region: str) -> float:
        try:
            return self.regional_population[(year, region)]
        except KeyError:
            raise CoverageError(f"scenario {self.name} has no {POPULATION} for {region} {year}") from None

    def covariate_row(self, year: int, region: str) -> dict:
        return {"region": region, "log_co2": math.log(self.co2(year)), "log_gdp": math.log(self.gdp(year, region))}

    def scaled(self, co2=1.0, gdp=1.0, population=1.0) -> "ScenarioPath":
        """Copy with every value of a series multiplied by a constant or a ``{region: factor}`` map."""
        def factor(f, r):
            return f.get(r, 1.0) if isinstance(f, Mapping) else f

        return ScenarioPath(
            self.name,
            {y: v * co2 for y, v in self.world_co2_pc.items()},
            {(y, r): v * factor(gdp, r) for (y, r), v in self.regional_gdp_pc.items()},
            {(y, r): v * factor(population, r) for (y, r), v in self.regional_population.items()},
            self.base_year,
        )


def splice_path(path: ScenarioPath, observed: Covariates, year: int = 2019) -> ScenarioPath:
    """Rebase a scenario onto observed data by a ratio splice.

    Every series is multiplied by ``observed(year) / scenario(year)``, which
    keeps the scenario's growth rates and makes it pass through the observed
    value in ``year``. Regional population is read from ``population``
    series scoped to the region code.
    """
    if not (path.base_year <= year <= path.last_year):
        raise CoverageError(f"scenario {path.name} does not cover the splice year {year}")
    co2 = observed.get(CO2_PC, WORLD).value(year) / path.co2(year)
    regions = sorted({r for _, r in path.regional_gdp_pc})
    gdp = {r: observed.get(GDP_PC, r).value(year) / path.gdp(year, r) for r in regions}
    pop_regions = sorted({r for _, r in path.regional_population})
    pop = {r: observed.get(POPULATION, r).value(year) / path.population(year, r) for r in pop_regions}
    return path.scaled(co2, gdp, pop)


def load_scenarios(path) -> dict[str, ScenarioPath]:
    """Read ``scenario,series,scope,year,value`` rows into named paths.

    ``series`` is one of ``co2_pc`` (scope ``WLD``), ``gdp_pc`` or
    ``population`` (scope a region code). The base year is the first year
    present.
    """
    path = Path(path)
    frame = pd.read_csv(path, comment="#", dtype={"scenario": str, "series": str, "scope": str},
                        float_precision="round_trip")
    needed = ["scenario", "series", "scope", "year", "value"]
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise IngestError(path, [(1, f"header missing column(s) {missing}")])
    out = {}
    for name, group in frame.groupby("scenario", sort=True):
        co2, gdp, pop = {}, {}, {}
        for row in group.itertuples(index=False):
            year, value = int(row.year), float(row.value)
            if row.series == CO2_PC:
                co2[year] = value
            elif row.series == GDP_PC:
                gdp[(year, row.scope)] = value
            elif row.series == POPULATION:
                pop[(year, row.scope)] = value
            else:
                raise IngestError(path, [(0, f"unknown series {row.series!r}")])
        if not co2:
            raise IngestError(path, [(0, f"scenario {name} has no {CO2_PC} series")])
        out[str(name)] = ScenarioPath(str(name), co2, gdp, pop, min(co2))
    return out


def write_scenarios(paths: Iterable[ScenarioPath], target, header_lines: Sequence[str] = ()) -> None:
    rows = []
    for p in paths:
        rows += [(p.name, CO2_PC, WORLD, y, v) for y, v in sorted(p.world_co2_pc.items())]
        rows += [(p.name, GDP_PC, r, y, v) for (y, r), v in sorted(p.regional_gdp_pc.items(), key=lambda kv: (kv[0][1], kv[0][0]))]
        rows += [(p.name, POPULATION, r, y, v) for (y, r), v in sorted(p.regional_population.items(), key=lambda kv: (kv[0][1], kv[0][0]))]
    with open(target, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "series", "scope", "year", "value"])
        for name, series, scope, year, value in rows:
            w.writerow([name, series, scope, year, repr(float(value))])


# ---------------------------------------------------------------------------
# projection operations


def project_counts(
    fit: FrequencyFit, path: ScenarioPath, horizons: Sequence[int] = DEFAULT_HORIZONS,
    regions: Sequence[str] | None = None,
) -> dict[tuple[str, int], float]:
    """Expected yearly number of disasters ``lambda`` per (region, horizon)."""
    regions = fit.regions if regions is None else regions
    out = {}
    for h in horizons:
        for r in regions:
            row = {"region": r, "log_co2": math.log(path.co2(h))}
            if any(t.startswith("log_gdp") for t in fit.spec.terms):
                row["log_gdp"] = math.log(path.gdp(h, r))
            out[(r, h)] = predict_lambda(fit, row)
    return out


def deaths_statistic(params: GpdParams) -> tuple[float, str]:
    """Mean deaths per disaster, or the median when the mean is infinite."""
    m = gpd_mean(params)
    if m is INFINITE_MEAN:
        return gpd_median(params), "median"
    return m, "mean"


def project_deaths(
    fit: SeverityFit, path: ScenarioPath, region: str, horizon: int, reference_year: int = 2019
) -> tuple[float, str]:
    """Deaths per disaster at ``horizon``, scaled by ``P(horizon) / P(reference_year)``.

    Returns ``(value, "mean")`` when ``xi < 1`` and ``(median, "median")``
    otherwise. Raises :class:`BoundaryError` if ``xi <= -1``.
    """
    params = severity_params_at(fit, path.covariate_row(horizon, region))
    value, tag = deaths_statistic(params)
    ratio = path.population(horizon, region) / path.population(reference_year, region)
    return value * ratio, tag


@dataclass(frozen=True)
class ProjectionRow:
    scenario: str
    disaster_type: str
    region: str
    horizon: int
    n_disasters: float
    deaths_per_disaster: float
    deaths_stat: str
    annual_deaths: float


COLUMNS = ("scenario", "disaster_type", "region", "horizon", "n_disasters", "deaths_per_disaster", "stat", "annual_deaths")


@dataclass(frozen=True)
class ProjectionTable:
    rows: tuple[ProjectionRow, ...] = field(default_factory=tuple)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    def __add__(self, other: "ProjectionTable") -> "ProjectionTable":
        return ProjectionTable(self.rows + other.rows)

    def get(self, disaster_type: str, region: str, horizon: int, scenario: str | None = None) -> ProjectionRow:
        for row in self.rows:
            if (row.disaster_type, row.region, row.horizon) == (disaster_type, region, horizon) and (
                scenario is None or row.scenario == scenario
            ):
                return row
        raise KeyError((disaster_type, region, horizon, scenario))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                (r.scenario, r.disaster_type, r.region, r.horizon, r.n_disasters, r.deaths_per_disaster,
                 r.deaths_stat, r.annual_deaths)
                for r in self.rows
            ],
            columns=list(COLUMNS),
        )

    def to_csv(self, header_lines: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([r.scenario, r.disaster_type, r.region, r.horizon, _fmt(r.n_disasters),
                        _fmt(r.deaths_per_disaster), r.deaths_stat, _fmt(r.annual_deaths)])
        return buf.getvalue()

    def render_text(self) -> str:
        """Aligned text table; median-based cells carry a ``*``."""
        lines = []
        keys = sorted({(r.scenario, r.disaster_type, r.horizon) for r in self.rows})
        for scen, kind, h in keys:
            lines.append(f"{scen} | {kind} | {h}")
            lines.append(f"  {'region':<6}{'nb disasters':>14}{'deaths/dis.':>14}{'annual deaths':>15}")
            for r in self.rows:
                if (r.scenario, r.disaster_type, r.horizon) != (scen, kind, h):
                    continue
                star = "*" if r.deaths_stat == "median" else " "
                lines.append(
                    f"  {r.region:<6}{r.n_disasters:>14.1f}{r.deaths_per_disaster:>13.1f}{star}{r.annual_deaths:>15.1f}"
                )
            lines.append("")
        lines.append("* median used instead of the mean (tail index >= 1); nan: tail index <= -1")
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return "nan" if not math.isfinite(x) else repr(float(x))


def project_annual_toll(
    counts: Mapping[tuple[str, int], float],
    deaths: Mapping[tuple[str, int], tuple[float, str]],
    scenario: str = "",
    disaster_type: str = "",
) -> ProjectionTable:
    """Annual toll = expected count x deaths per disaster, plus world rows.

    World counts and tolls are sums over regions; where a region uses the
    median, the median enters the sum. World deaths per disaster is the
    world toll divided by the world count, and the world row is tagged
    ``median`` if any component is. Rows tagged ``boundary`` (no valid GPD
    at that design point) are listed but left out of the world sums.
    """
    if set(counts) != set(deaths):
        raise KeyError("counts and deaths must have the same (region, horizon) keys")
    rows = []
    horizons = sorted({h for _, h in counts})
    for h in horizons:
        regions = [r for r, hh in counts if hh == h]
        tot_n = tot_d = 0.0
        any_median = False
        for r in regions:
            n = float(counts[(r, h)])
            d, tag = deaths[(r, h)]
            annual = n * d
            rows.append(ProjectionRow(scenario, disaster_type, r, h, n, float(d), tag, annual))
            if tag == "boundary":
                continue
            tot_n += n
            tot_d += annual
            any_median |= tag == "median"
        per = tot_d / tot_n if tot_n > 0 else float("nan")
        rows.append(ProjectionRow(scenario, disaster_type, WORLD, h, tot_n, per, "median" if any_median else "mean", tot_d))
    return ProjectionTable(tuple(rows))


def project(
    fits: Mapping[str, tuple[FrequencyFit, SeverityFit]],
    path: ScenarioPath,
    horizons: Sequence[int] = DEFAULT_HORIZONS,
    reference_year: int = 2019,
    on_boundary: str = "raise",
) -> ProjectionTable:
    """Full projection table for several disaster types under one path.

    ``on_boundary="flag"`` turns a :class:`BoundaryError` (tail index <= -1
    at a scenario design point) into a row with ``nan`` deaths tagged
    ``boundary`` instead of aborting.
    """
    if on_boundary not in ("raise", "flag"):
        raise ValueError("on_boundary must be 'raise' or 'flag'")
    table = ProjectionTable()
    for kind, (ffit, sfit) in fits.items():
        counts = project_counts(ffit, path, horizons)
        deaths = {}
        for r, h in counts:
            try:
                deaths[(r, h)] = project_deaths(sfit, path, r, h, reference_year)
            except BoundaryError:
                if on_boundary == "raise":
                    raise
                deaths[(r, h)] = (float("nan"), "boundary")
        table = table + project_annual_toll(counts, deaths, path.name, kind)
    return table
