"""Event and covariate data model, CSV ingestion, population rescaling and the annual panel."""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.interpolate import CubicSpline

from .errors import CoverageError, DomainError, EmptyInputError, IngestError
from .regions import DISASTER_TYPES, REGIONS, WORLD, country_regions

DEFAULT_WINDOW = (dt.date(1960, 1, 1), dt.date(2019, 12, 31))
DEFAULT_REFERENCE_YEAR = 2019

EVENT_COLUMNS = ("date", "country", "region", "disaster_type", "deaths")
COVARIATE_COLUMNS = ("name", "scope", "year", "value")

# covariate series names used throughout
CO2_PC = "co2_pc"
GDP_PC = "gdp_pc"
POPULATION = "population"
_POSITIVE_SERIES = {CO2_PC, GDP_PC, POPULATION}


@dataclass(frozen=True)
class DisasterEvent:
    event_id: str
    date: dt.date
    country: str
    region: str
    disaster_type: str
    deaths: float

    def __post_init__(self):
        if self.region not in REGIONS:
            raise DomainError(f"unknown region {self.region!r}")
        if self.disaster_type not in DISASTER_TYPES:
            raise DomainError(f"unknown disaster type {self.disaster_type!r}")
        if not (self.deaths >= 0 and math.isfinite(self.deaths)):
            raise DomainError(f"deaths must be a finite non-negative number, got {self.deaths!r}")

    @property
    def year(self) -> int:
        return self.date.year


@dataclass(frozen=True)
class RescaledEvent:
    base: DisasterEvent
    rescaled_deaths: float

    # convenience pass-throughs
    @property
    def year(self) -> int:
        return self.base.date.year

    @property
    def region(self) -> str:
        return self.base.region

    @property
    def disaster_type(self) -> str:
        return self.base.disaster_type

    @property
    def deaths(self) -> float:
        return self.base.deaths


@dataclass(frozen=True, eq=False)
class CovariateSeries:
    """One annual series, e.g. world CO2 per capita or a region's population."""

    name: str
    scope: str
    observations: Mapping[int, float]
    unit: str = ""

    def __post_init__(self):
        if not self.observations:
            raise DomainError(f"series {self.name}/{self.scope} has no observations")
        years = sorted(int(y) for y in self.observations)
        if years != list(range(years[0], years[-1] + 1)):
            raise DomainError(f"series {self.name}/{self.scope}: years are not contiguous")
        values = np.array([self.observations[y] for y in years], dtype=float)
        if not np.all(np.isfinite(values)):
            raise DomainError(f"series {self.name}/{self.scope}: non-finite values")
        if self.name in _POSITIVE_SERIES and np.any(values <= 0):
            raise DomainError(f"series {self.name}/{self.scope}: values must be strictly positive")
        object.__setattr__(self, "observations", {y: float(self.observations[y]) for y in years})

    @property
    def years(self) -> np.ndarray:
        return np.fromiter(self.observations, dtype=int)

    @property
    def values(self) -> np.ndarray:
        return np.fromiter(self.observations.values(), dtype=float)

    @property
    def first_year(self) -> int:
        return next(iter(self.observations))

    @property
    def last_year(self) -> int:
        return self.first_year + len(self.observations) - 1

    def covers(self, start: int, stop: int) -> bool:
        return self.first_year <= start and stop <= self.last_year

    def value(self, year: int) -> float:
        try:
            return self.observations[int(year)]
        except KeyError:
            raise CoverageError(f"{self.name}/{self.scope} has no value for {year}") from None

    @cached_property
    def _interpolant(self):
        x = self.years.astype(float)
        y = self.values
        if len(x) >= 4:
            return CubicSpline(x, y, bc_type="natural", extrapolate=False)
        return lambda t: np.interp(t, x, y, left=np.nan, right=np.nan)


def fractional_year(date: dt.date) -> float:
    """Calendar date -> decimal year with year knots placed on 1 January."""
    start = dt.date(date.year, 1, 1)
    length = (dt.date(date.year + 1, 1, 1) - start).days
    return date.year + (date - start).days / length


def interpolate_annual(series: CovariateSeries, date: dt.date) -> float:
    """Natural cubic spline through the annual knots, evaluated at ``date``.

    Knot ``Y`` sits on ``Y-01-01``. Series with fewer than four knots are
    interpolated linearly. Dates outside the knot range raise
    :class:`CoverageError`; there is no extrapolation.
    """
    t = fractional_year(date)
    if not (series.first_year <= t <= series.last_year):
        raise CoverageError(
            f"{series.name}/{series.scope}: {date.isoformat()} outside knot range "
            f"[{series.first_year}, {series.last_year}]"
        )
    return float(series._interpolant(t))


@dataclass(frozen=True)
class Covariates:
    """Bag of series looked up by ``(name, scope)``."""

    series: tuple[CovariateSeries, ...]

    def __post_init__(self):
        keys = [(s.name, s.scope) for s in self.series]
        if len(set(keys)) != len(keys):
            raise DomainError("duplicate (name, scope) covariate series")

    @cached_property
    def _index(self) -> dict[tuple[str, str], CovariateSeries]:
        return {(s.name, s.scope): s for s in self.series}

    def get(self, name: str, scope: str) -> CovariateSeries:
        try:
            return self._index[(name, scope)]
        except KeyError:
            raise CoverageError(f"no covariate series {name!r} for scope {scope!r}") from None

    def has(self, name: str, scope: str) -> bool:
        return (name, scope) in self._index

    def __iter__(self):
        return iter(self.series)


# ---------------------------------------------------------------------------
# ingestion


def _open_csv(path, expected: Sequence[str], schema: Mapping[str, str] | None):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise EmptyInputError(f"{path}: file is empty")
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise EmptyInputError(f"{path}: file is empty") from None
    schema = dict(schema or {})
    columns = {name: schema.get(name, name) for name in expected}
    missing = [col for col in columns.values() if col not in header]
    if missing:
        raise IngestError(path, [(1, f"header missing column(s) {missing}")])
    positions = {name: header.index(col) for name, col in columns.items()}
    rows = list(reader)
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")
    return path, header, positions, rows


def load_events(
    path,
    schema: Mapping[str, str] | None = None,
    window: tuple[dt.date, dt.date] = DEFAULT_WINDOW,
    country_map: Mapping[str, str] | None = None,
) -> list[DisasterEvent]:
    """Read an events CSV (``date,country,region,disaster_type,deaths``).

    ``schema`` maps canonical field names to the file's column names. Every
    row is validated; if any row fails, :class:`IngestError` is raised with
    one diagnostic per rejected row (file line numbers, header is line 1).
    An optional ``event_id`` column is honoured, otherwise ids are derived
    from the line number.
    """
    path, header, pos, rows = _open_csv(path, EVENT_COLUMNS, schema)
    id_col = (schema or {}).get("event_id", "event_id")
    id_pos = header.index(id_col) if id_col in header else None
    mapping = country_regions() if country_map is None else country_map
    events: list[DisasterEvent] = []
    problems: list[tuple[int, str]] = []
    for offset, row in enumerate(rows):
        line = offset + 2
        if not row or all(not c.strip() for c in row):
            problems.append((line, "blank row"))
            continue
        if len(row) < len(header):
            problems.append((line, f"expected {len(header)} fields, got {len(row)}"))
            continue
        get = lambda key: row[pos[key]].strip()
        try:
            date = dt.date.fromisoformat(get("date"))
        except ValueError:
            problems.append((line, f"malformed date {get('date')!r}"))
            continue
        if not (window[0] <= date <= window[1]):
            problems.append((line, f"date {date} outside study window {window[0]}..{window[1]}"))
            continue
        region, kind, country = get("region"), get("disaster_type"), get("country")
        if region not in REGIONS:
            problems.append((line, f"unknown region {region!r}"))
            continue
        if kind not in DISASTER_TYPES:
            problems.append((line, f"unknown disaster type {kind!r}"))
            continue
        if country not in mapping:
            problems.append((line, f"country {country!r} is not in the region mapping"))
            continue
        if mapping[country] != region:
            problems.append((line, f"country {country} belongs to {mapping[country]}, not {region}"))
            continue
        try:
            deaths = float(get("deaths"))
        except ValueError:
            problems.append((line, f"deaths {get('deaths')!r} is not a number"))
            continue
        if not math.isfinite(deaths) or deaths < 0:
            problems.append((line, f"negative or non-finite deaths {get('deaths')}"))
            continue
        event_id = row[id_pos].strip() if id_pos is not None else f"{path.stem}:{line}"
        events.append(DisasterEvent(event_id, date, country, region, kind, deaths))
    if problems:
        raise IngestError(path, problems)
    return events


def load_covariates(path, schema: Mapping[str, str] | None = None) -> Covariates:
    """Read a ``name,scope,year,value`` CSV into :class:`Covariates`."""
    path, header, pos, rows = _open_csv(path, COVARIATE_COLUMNS, schema)
    unit_pos = header.index("unit") if "unit" in header else None
    collected: dict[tuple[str, str], dict[int, float]] = {}
    units: dict[tuple[str, str], str] = {}
    problems = []
    for offset, row in enumerate(rows):
        line = offset + 2
        try:
            name, scope = row[pos["name"]].strip(), row[pos["scope"]].strip()
            year, value = int(row[pos["year"]]), float(row[pos["value"]])
        except (ValueError, IndexError):
            problems.append((line, "unparseable row"))
            continue
        key = (name, scope)
        if year in collected.setdefault(key, {}):
            problems.append((line, f"duplicate value for {name}/{scope}/{year}"))
            continue
        collected[key][year] = value
        if unit_pos is not None:
            units[key] = row[unit_pos].strip()
    if problems:
        raise IngestError(path, problems)
    series = []
    for (name, scope), obs in collected.items():
        try:
            series.append(CovariateSeries(name, scope, obs, units.get((name, scope), "")))
        except DomainError as exc:
            raise IngestError(path, [(0, str(exc))]) from None
    return Covariates(tuple(series))


def write_events(events: Iterable[DisasterEvent], target, header_lines: Sequence[str] = ()) -> None:
    """Write events in the format :func:`load_events` reads (with ``event_id``)."""
    with open(target, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("event_id",) + EVENT_COLUMNS)
        for e in events:
            w.writerow([e.event_id, e.date.isoformat(), e.country, e.region, e.disaster_type, repr(float(e.deaths))])


def write_covariates(covariates: Covariates, target, header_lines: Sequence[str] = ()) -> None:
    with open(target, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COVARIATE_COLUMNS + ("unit",))
        for s in covariates:
            for year, value in s.observations.items():
                w.writerow([s.name, s.scope, year, repr(float(value)), s.unit])


# ---------------------------------------------------------------------------
# rescaling


def rescale_deaths(
    event: DisasterEvent, population: CovariateSeries, reference_year: int = DEFAULT_REFERENCE_YEAR
) -> RescaledEvent:
    """Scale deaths to the reference-year population of the event's country."""
    if population.scope != event.country:
        raise CoverageError(
            f"population series scope {population.scope!r} does not match country {event.country!r}"
        )
    if event.deaths == 0:
        return RescaledEvent(event, 0.0)
    p_ref = population.value(reference_year)
    p_event = interpolate_annual(population, event.date)
    return RescaledEvent(event, event.deaths * p_ref / p_event)


def rescale_events(
    events: Iterable[DisasterEvent], covariates: Covariates, reference_year: int = DEFAULT_REFERENCE_YEAR
) -> list[RescaledEvent]:
    """Vectorised :func:`rescale_deaths` over many events, grouped by country."""
    events = list(events)
    out: list[RescaledEvent | None] = [None] * len(events)
    by_country: dict[str, list[int]] = {}
    for i, ev in enumerate(events):
        by_country.setdefault(ev.country, []).append(i)
    for country, idx in by_country.items():
        if not covariates.has(POPULATION, country):
            raise CoverageError(f"no population series for country {country!r}")
        pop = covariates.get(POPULATION, country)
        p_ref = pop.value(reference_year)
        t = np.array([fractional_year(events[i].date) for i in idx])
        if t.min() < pop.first_year or t.max() > pop.last_year:
            bad = events[idx[int(np.argmax((t < pop.first_year) | (t > pop.last_year)))]]
            raise CoverageError(f"population for {country} does not cover {bad.date.isoformat()}")
        p_event = np.asarray(pop._interpolant(t), dtype=float)
        for j, i in enumerate(idx):
            d = events[i].deaths
            out[i] = RescaledEvent(events[i], 0.0 if d == 0 else d * p_ref / p_event[j])
    return out  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# annual panel


@dataclass(frozen=True, eq=False)
class AnnualPanel:
    """One row per (year, region); counts per disaster type; log covariates.

    Rows are ordered year-major then by the canonical region order, so row
    ``(year - first_year) * len(regions) + region_index`` is the cell.
    """

    first_year: int
    last_year: int
    regions: tuple[str, ...]
    log_co2: np.ndarray
    log_gdp: np.ndarray
    counts: Mapping[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_years(self) -> int:
        return self.last_year - self.first_year + 1

    @property
    def year(self) -> np.ndarray:
        return np.repeat(np.arange(self.first_year, self.last_year + 1), len(self.regions))

    @property
    def region(self) -> np.ndarray:
        return np.tile(np.array(self.regions), self.n_years)

    def __len__(self) -> int:
        return self.n_years * len(self.regions)

    def row(self, year: int, region: str) -> int:
        if not (self.first_year <= year <= self.last_year):
            raise CoverageError(f"year {year} outside panel {self.first_year}..{self.last_year}")
        return (year - self.first_year) * len(self.regions) + self.regions.index(region)

    def rows(self, years: np.ndarray, regions: np.ndarray) -> np.ndarray:
        years = np.asarray(years)
        if years.size and (years.min() < self.first_year or years.max() > self.last_year):
            raise CoverageError("event years fall outside the panel window")
        lookup = {r: i for i, r in enumerate(self.regions)}
        ridx = np.array([lookup[r] for r in regions], dtype=int)
        return (years - self.first_year) * len(self.regions) + ridx

    def with_counts(self, disaster_type: str, counts: np.ndarray) -> "AnnualPanel":
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (len(self),):
            raise ValueError("counts must have one entry per panel row")
        new = dict(self.counts)
        new[disaster_type] = counts
        return replace(self, counts=new)

    def covariate_rows(self) -> dict[str, np.ndarray]:
        return {"region": self.region, "log_co2": self.log_co2, "log_gdp": self.log_gdp}

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {"year": self.year, "region": self.region, "log_co2": self.log_co2, "log_gdp": self.log_gdp}
        )
        for kind, c in self.counts.items():
            frame[kind] = c
        return frame


def covariate_panel(
    covariates: Covariates, window: tuple[int, int], regions: Sequence[str] = REGIONS
) -> AnnualPanel:
    """Panel skeleton with log world CO2 per capita and log regional GDP per capita."""
    start, stop = window
    co2 = covariates.get(CO2_PC, WORLD)
    if not co2.covers(start, stop):
        raise CoverageError(f"{CO2_PC}/{WORLD} does not cover {start}..{stop}")
    gdp = {}
    for r in regions:
        s = covariates.get(GDP_PC, r)
        if not s.covers(start, stop):
            raise CoverageError(f"{GDP_PC}/{r} does not cover {start}..{stop}")
        gdp[r] = s
    years = range(start, stop + 1)
    log_co2 = np.repeat(np.log([co2.value(y) for y in years]), len(regions))
    log_gdp = np.log([gdp[r].value(y) for y in years for r in regions])
    return AnnualPanel(start, stop, tuple(regions), log_co2, log_gdp, {})


def build_panel(
    events: Iterable[RescaledEvent | DisasterEvent],
    covariates: Covariates,
    window: tuple[int, int] = (1960, 2019),
    disaster_types: Sequence[str] = DISASTER_TYPES,
) -> AnnualPanel:
    """Count events per (year, region, type) over the whole window.

    Each event is assigned to the calendar year of its start date. Zero
    cells are kept.
    """
    panel = covariate_panel(covariates, window)
    n_regions = len(panel.regions)
    counts = {k: np.zeros(len(panel), dtype=np.int64) for k in disaster_types}
    for ev in events:
        base = ev.base if isinstance(ev, RescaledEvent) else ev
        if base.disaster_type not in counts:
            continue
        if not (window[0] <= base.date.year <= window[1]):
            raise CoverageError(f"event {base.event_id} ({base.date}) outside panel window {window}")
        counts[base.disaster_type][(base.date.year - window[0]) * n_regions + panel.regions.index(base.region)] += 1
    return replace(panel, counts=counts)


@dataclass(frozen=True)
class SeveritySample:
    """Strictly positive rescaled deaths of one disaster type with design covariates."""

    deaths: np.ndarray
    year: np.ndarray
    region: np.ndarray
    log_gdp: np.ndarray
    log_co2: np.ndarray

    def __len__(self):
        return len(self.deaths)

    def covariate_rows(self) -> dict[str, np.ndarray]:
        return {"region": self.region, "log_co2": self.log_co2, "log_gdp": self.log_gdp}


def severity_sample(events: Iterable[RescaledEvent], panel: AnnualPanel, disaster_type: str) -> SeveritySample:
    """Collect positive-death events of one type and attach annual covariates.

    Zero-death events stay in the frequency counts but are not severity data.
    """
    chosen = [e for e in events if e.disaster_type == disaster_type and e.rescaled_deaths > 0]
    years = np.array([e.year for e in chosen], dtype=int)
    regions = np.array([e.region for e in chosen], dtype=object)
    rows = panel.rows(years, regions) if chosen else np.zeros(0, dtype=int)
    return SeveritySample(
        deaths=np.array([e.rescaled_deaths for e in chosen], dtype=float),
        year=years,
        region=regions.astype(str) if chosen else np.zeros(0, dtype=str),
        log_gdp=panel.log_gdp[rows],
        log_co2=panel.log_co2[rows],
    )


def summary_statistics(events: Iterable[RescaledEvent], window: tuple[int, int]) -> pd.DataFrame:
    """Per region and type: disasters per year, mean deaths per disaster, annual deaths.

    Mirrors the layout of the descriptive tables (world row appended).
    """
    start, stop = window
    n_years = stop - start + 1
    rows = [
        {"region": e.region, "disaster_type": e.disaster_type, "deaths": e.rescaled_deaths}
        for e in events
        if start <= e.year <= stop
    ]
    frame = pd.DataFrame(rows, columns=["region", "disaster_type", "deaths"])
    out = []
    for kind in DISASTER_TYPES:
        sub = frame[frame.disaster_type == kind]
        for region in list(REGIONS) + [WORLD]:
            cell = sub if region == WORLD else sub[sub.region == region]
            n = len(cell)
            total = float(cell.deaths.sum())
            out.append(
                {
                    "disaster_type": kind,
                    "region": region,
                    "n_disasters": n / n_years,
                    "deaths_per_disaster": total / n if n else float("nan"),
                    "annual_deaths": total / n_years,
                }
            )
    return pd.DataFrame(out)
