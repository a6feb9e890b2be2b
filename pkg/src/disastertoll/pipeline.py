"""Run configuration and the load -> rescale -> panel -> fit plumbing shared by the CLI."""
from __future__ import annotations

import datetime as dt
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from .calibration import published_fits, published_severity_spec
from .data_model import (
    AnnualPanel,
    Covariates,
    DisasterEvent,
    SeveritySample,
    build_panel,
    load_covariates,
    load_events,
    rescale_events,
    severity_sample,
)
from .errors import DataError, DisasterTollError
from .frequency import FrequencyFit, FrequencySpec, fit_frequency
from .regions import DISASTER_TYPES, REGION_NAMES
from .selection import LadderReport, select_severity_spec
from .severity import SeverityFit, fit_severity

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class ConfigError(DisasterTollError):
    """Malformed or inconsistent run configuration (a usage error)."""


# key -> default. Paths are relative to the config file's directory.
DEFAULTS: dict[str, Any] = {
    "events": "data/events.csv",
    "covariates": "data/covariates.csv",
    "scenarios": "data/scenarios.csv",
    "window_start": 1960,
    "window_end": 2019,
    "reference_year": 2019,
    "disaster_types": list(DISASTER_TYPES),
    "specs": "published",  # "published" or "select"
    "alpha": 0.05,
    "ladder_overrides": [],  # e.g. ["cold_wave.xi=3"]: force a ladder model under specs = "select"
    "fits": "",  # "" -> <out>/fits, "published" -> published estimates, else a directory
    "scenario": "",  # "" -> every scenario in the file
    "splice": True,
    "horizons": [2040, 2060, 2080, 2100],
    "on_boundary": "flag",
    "replications": 500,
    "subsample_count": 100,
    "subsample_size": 50,
    "interval_level": 0.95,
    "dump_replicates": False,  # also write every replicate's projections
    "window_length": 20,
    "null_simulations": 200,
    "u_grid": [round(0.5 + 0.02 * i, 2) for i in range(25)],
    "conventional": False,
    "chi_band_resamples": 500,
    "pairs": [],  # [] -> every pair of disaster_types
    "simulate_counts": "poisson",
    "seed": 0,
    "jobs": 1,
    "out": "out",
}

# settings that cannot change any output byte
NOT_HASHED = ("jobs", "out")


@dataclass(frozen=True)
class RunConfig:
    values: Mapping[str, Any]
    base_dir: Path = field(default_factory=Path.cwd)

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key) from None

    @property
    def window(self) -> tuple[int, int]:
        return int(self.values["window_start"]), int(self.values["window_end"])

    def path(self, key: str) -> Path:
        p = Path(self.values[key])
        return p if p.is_absolute() else self.base_dir / p

    @property
    def out_dir(self) -> Path:
        return self.path("out")

    @property
    def sha256(self) -> str:
        doc = {k: v for k, v in self.values.items() if k not in NOT_HASHED}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()

    @property
    def header_lines(self) -> list[str]:
        return [f"config_sha256={self.sha256}", f"seed={self.values['seed']}"]


def _check(values: dict) -> None:
    unknown = sorted(set(values) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for key, default in DEFAULTS.items():
        v = values[key]
        if isinstance(default, bool):
            ok = isinstance(v, bool)
        elif isinstance(default, int):
            ok = isinstance(v, int) and not isinstance(v, bool)
        elif isinstance(default, float):
            ok = isinstance(v, (int, float)) and not isinstance(v, bool)
        elif isinstance(default, list):
            ok = isinstance(v, list)
        else:
            ok = isinstance(v, str)
        if not ok:
            raise ConfigError(f"config key {key!r} has the wrong type ({type(v).__name__})")
    bad = [t for t in values["disaster_types"] if t not in DISASTER_TYPES]
    if bad:
        raise ConfigError(f"unknown disaster type(s): {bad}")
    if values["specs"] not in ("published", "select"):
        raise ConfigError("specs must be 'published' or 'select'")
    if values["on_boundary"] not in ("raise", "flag"):
        raise ConfigError("on_boundary must be 'raise' or 'flag'")
    if values["simulate_counts"] not in ("poisson", "fixed"):
        raise ConfigError("simulate_counts must be 'poisson' or 'fixed'")
    if values["window_start"] > values["window_end"]:
        raise ConfigError("window_start is after window_end")
    if not 0 <= values["seed"] < 2**64:
        raise ConfigError("seed must be a non-negative 64-bit integer")
    if values["jobs"] == 0:
        raise ConfigError("jobs must be non-zero")
    ladder_overrides(values["ladder_overrides"])
    for pair in values["pairs"]:
        if len(pair) != 2 or any(t not in DISASTER_TYPES for t in pair):
            raise ConfigError(f"bad pair {pair!r}")


def ladder_overrides(entries) -> dict[tuple[str, str], int]:
    """``["cold_wave.xi=3", ...]`` -> ``{("cold_wave", "xi"): 3}``."""
    out = {}
    for entry in entries:
        try:
            key, model = str(entry).split("=")
            kind, param = key.strip().split(".")
            number = int(model)
        except ValueError:
            raise ConfigError(f"bad ladder override {entry!r} (expected 'type.nu=N' or 'type.xi=N')") from None
        if kind not in DISASTER_TYPES or param not in ("nu", "xi") or not 1 <= number <= 5:
            raise ConfigError(f"bad ladder override {entry!r}")
        out[(kind, param)] = number
    return out


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read a flat TOML document, fill defaults and apply ``overrides`` (flags win)."""
    values = dict(DEFAULTS)
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            doc = tomllib.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"{path}: config file not found") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        nested = [k for k, v in doc.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(f"{path}: config must be flat, found table(s) {nested}")
        values.update(doc)
        base = path.resolve().parent
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    _check(values)
    return RunConfig(values, base)


# ---------------------------------------------------------------------------
# inputs


@dataclass(frozen=True, eq=False)
class Inputs:
    events: list[DisasterEvent]
    covariates: Covariates
    panel: AnnualPanel
    samples: Mapping[str, SeveritySample]


def load_inputs(cfg: RunConfig) -> Inputs:
    start, stop = cfg.window
    events = load_events(cfg.path("events"), window=(dt.date(start, 1, 1), dt.date(stop, 12, 31)))
    covariates = load_covariates(cfg.path("covariates"))
    return prepare_inputs(events, covariates, cfg.window, cfg.reference_year, cfg.disaster_types)


def prepare_inputs(events, covariates, window, reference_year=2019, types: Sequence[str] = DISASTER_TYPES) -> Inputs:
    rescaled = rescale_events(events, covariates, reference_year)
    panel = build_panel(rescaled, covariates, window, types)
    samples = {k: severity_sample(rescaled, panel, k) for k in types}
    return Inputs(list(events), covariates, panel, samples)


# ---------------------------------------------------------------------------
# fitting


@dataclass(frozen=True, eq=False)
class FitBundle:
    frequency: FrequencyFit
    severity: SeverityFit
    ladders: tuple[LadderReport, ...] = ()


def fit_type(inputs: Inputs, kind: str, window, specs: str = "published", alpha: float = 0.05,
             overrides: Mapping[tuple[str, str], int] | None = None) -> FitBundle:
    freq = fit_frequency(inputs.panel, FrequencySpec(kind, window=window))
    sample = inputs.samples[kind]
    if specs == "select":
        link = published_severity_spec(kind, window).xi_link
        overrides = overrides or {}
        nu_rep, xi_rep = select_severity_spec(sample, inputs.panel, kind, xi_link=link, window=window, alpha=alpha,
                                              nu_override=overrides.get((kind, "nu")),
                                              xi_override=overrides.get((kind, "xi")))
        return FitBundle(freq, xi_rep.selected_fit, (nu_rep, xi_rep))
    return FitBundle(freq, fit_severity(sample, inputs.panel, published_severity_spec(kind, window)))


def fit_all(inputs: Inputs, types: Sequence[str], window, specs="published", alpha=0.05, jobs: int = 1,
            overrides: Mapping[tuple[str, str], int] | None = None) -> dict[str, FitBundle]:
    if jobs == 1:
        done = [fit_type(inputs, k, window, specs, alpha, overrides) for k in types]
    else:
        done = Parallel(n_jobs=jobs)(delayed(fit_type)(inputs, k, window, specs, alpha, overrides) for k in types)
    return dict(zip(types, done))


def dump_json(doc: Mapping, header: Mapping[str, Any]) -> str:
    return json.dumps({**header, **doc}, indent=2, sort_keys=True) + "\n"


def write_fits(bundles: Mapping[str, FitBundle], target: Path, cfg: RunConfig) -> None:
    target.mkdir(parents=True, exist_ok=True)
    header = {"config_sha256": cfg.sha256, "seed": cfg.seed}
    for kind, b in bundles.items():
        (target / f"{kind}_frequency.json").write_text(dump_json(b.frequency.to_dict(), header), encoding="utf-8")
        (target / f"{kind}_severity.json").write_text(dump_json(b.severity.to_dict(), header), encoding="utf-8")
        for rep in b.ladders:
            (target / f"{kind}_ladder_{rep.parameter}.json").write_text(dump_json(rep.to_dict(), header), encoding="utf-8")
            (target / f"{kind}_ladder_{rep.parameter}.txt").write_text(rep.render_text(), encoding="utf-8")


def load_fits(cfg: RunConfig) -> dict[str, tuple[FrequencyFit, SeverityFit]]:
    types = list(cfg.disaster_types)
    if cfg.fits == "published":
        published = published_fits(cfg.window)
        return {k: published[k] for k in types}
    source = cfg.path("fits") if cfg.fits else cfg.out_dir / "fits"
    out = {}
    for kind in types:
        try:
            f = json.loads((source / f"{kind}_frequency.json").read_text(encoding="utf-8"))
            s = json.loads((source / f"{kind}_severity.json").read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise DataError(f"{exc.filename}: fit document missing (run 'fit' first)") from None
        out[kind] = (FrequencyFit.from_dict(f), SeverityFit.from_dict(s))
    return out


# ---------------------------------------------------------------------------
# coefficient table


def significance_marker(coef: float, se: float) -> str:
    """``(a)``..``(d)`` for two-sided significance at 0.1%, 1%, 5% and 10%."""
    if not (math.isfinite(coef) and math.isfinite(se)) or se <= 0:
        return ""
    p = 2 * stats.norm.sf(abs(coef / se))
    for level, mark in ((0.001, "(a)"), (0.01, "(b)"), (0.05, "(c)"), (0.1, "(d)")):
        if p < level:
            return mark
    return ""


def _label(col: str) -> str:
    if col == "intercept":
        return "Constant"
    if col == "log_gdp":
        return "log(GDP)"
    if col == "log_co2":
        return "log(CO2)"
    name, _, rest = col.partition("[")
    region = REGION_NAMES.get(rest.rstrip("]"), rest.rstrip("]"))
    if name == "region":
        return f"D({region})"
    var = {"log_gdp:region": "log(GDP)", "log_co2:region": "log(CO2)"}[name]
    return f"{var} x D({region})"


def _block(title, cols, coef, se) -> list[str]:
    lines = [title]
    for c, b, s in zip(cols, coef, se):
        lines.append(f"  {_label(c):<44}{b:>10.3f} {significance_marker(b, s):<4}{s:>9.3f}")
    return lines


def render_fit_table(bundles: Mapping[str, FitBundle]) -> str:
    """Coefficient table: estimate, significance marker, standard error."""
    out = []
    for kind, b in bundles.items():
        f, s = b.frequency, b.severity
        k = len(s.nu_coefficients)
        out.append(f"== {kind} ==")
        out += _block("Panel A: frequency (Poisson)", f.columns, f.coefficients, f.std_errors)
        out.append(f"  {'nb obs.':<44}{f.n_obs:>10d}")
        out.append(f"  {'Adjusted R2':<44}{f.adj_r2:>10.3f}")
        out.append(f"  {'Log-likelihood':<44}{f.loglik:>10.1f}")
        out += _block("Panel B: severity, scale parameter nu", s.nu_columns, s.nu_coefficients, s.std_errors[:k])
        link = "log(1 + xi)" if s.spec.xi_link == "log1p" else "xi"
        out += _block(f"Panel C: severity, tail index ({link})", s.xi_columns, s.xi_coefficients, s.std_errors[k:])
        out.append(f"  {'nb obs.':<44}{s.n_obs:>10d}")
        out.append(f"  {'Log-likelihood':<44}{s.loglik:>10.1f}")
        out.append("")
    out.append("(a), (b), (c), (d): significant at the 0.1%, 1%, 5% and 10% levels")
    return "\n".join(out) + "\n"


def pair_list(cfg: RunConfig) -> list[tuple[str, str]]:
    if cfg.pairs:
        return [tuple(p) for p in cfg.pairs]
    types = list(cfg.disaster_types)
    return [(a, b) for i, a in enumerate(types) for b in types[i + 1:]]


def child_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))
