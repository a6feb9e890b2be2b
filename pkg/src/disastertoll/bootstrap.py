"""Parametric bootstrap: simulate histories from fitted models, refit, reproject.

Every replicate draws from its own generator seeded by
``SeedSequence(seed, spawn_key=(0, index))``, so a replicate's result depends
only on the inputs, the master seed and its index. Serial and parallel runs
are therefore bit-identical.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from .data_model import AnnualPanel, SeveritySample
from .distributions import gpd_quantile_array
from .errors import ConvergenceError, DataError, DomainError
from .frequency import FrequencyFit, fit_frequency
from .projection import DEFAULT_HORIZONS, ScenarioPath
from .regions import WORLD
from .severity import BoundaryWarning, SeverityFit, fit_severity, params_grid

FAILURE_WARNING_SHARE = 0.05
QUANTITIES = ("n_disasters", "deaths_per_disaster", "annual_deaths")


class RefitFailureWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BootstrapConfig:
    replications: int = 10_000
    seed: int = 0
    subsample_count: int = 100
    subsample_size: int = 50
    interval_level: float = 0.95
    jobs: int = 1
    keep_replicates: bool = True

    def __post_init__(self):
        if self.replications < 1 or self.subsample_count < 1 or self.subsample_size < 1:
            raise ValueError("replications and subsample settings must be positive")
        if self.subsample_size > self.replications:
            # B=1 style runs: subsamples are the whole (tiny) set
            object.__setattr__(self, "subsample_size", self.replications)
        if not 0 < self.interval_level < 1:
            raise ValueError("interval_level must lie in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit non-negative integer")


TEST_PROFILE = BootstrapConfig(replications=500)


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, index)))


def _interval_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))


@dataclass(frozen=True)
class SyntheticHistory:
    counts: np.ndarray  # per panel row of the window
    sample: SeveritySample


def _window_cells(panel: AnnualPanel, window) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    keep = np.flatnonzero((panel.year >= window[0]) & (panel.year <= window[1]))
    rows = {"year": panel.year[keep], "region": panel.region[keep],
            "log_co2": panel.log_co2[keep], "log_gdp": panel.log_gdp[keep]}
    return keep, rows


def simulate_history(
    freq_fit: FrequencyFit,
    sev_fit: SeverityFit,
    panel: AnnualPanel,
    window: tuple[int, int] | None,
    rng: np.random.Generator,
    _cache: dict | None = None,
) -> SyntheticHistory:
    """One synthetic history: Poisson counts per (year, region), then GPD deaths per event."""
    if freq_fit.spec.response != sev_fit.spec.response:
        raise ValueError("frequency and severity fits are for different disaster types")
    window = window or freq_fit.spec.window
    if _cache is None:
        _cache = _history_inputs(freq_fit, sev_fit, panel, window)
    lam, xi, beta, rows = _cache["lam"], _cache["xi"], _cache["beta"], _cache["rows"]
    counts = rng.poisson(lam)
    idx = np.repeat(np.arange(len(lam)), counts)
    deaths = gpd_quantile_array(xi[idx], beta[idx], rng.random(idx.size))
    # inverse-transform draws can underflow to 0 for minute scales
    deaths = np.maximum(deaths, np.finfo(float).tiny)
    sample = SeveritySample(deaths, rows["year"][idx], rows["region"][idx], rows["log_gdp"][idx], rows["log_co2"][idx])
    return SyntheticHistory(counts, sample)


def _history_inputs(freq_fit, sev_fit, panel, window):
    keep, rows = _window_cells(panel, window)
    xi, beta = params_grid(sev_fit, rows["region"], rows["log_gdp"], rows["log_co2"])
    return {"keep": keep, "rows": rows, "lam": freq_fit.lambda_at(rows), "xi": xi, "beta": beta}


@dataclass(frozen=True)
class _Projector:
    """Vectorised projection for one path and horizon grid."""

    regions: tuple[str, ...]
    horizons: tuple[int, ...]
    rows: Mapping[str, np.ndarray]
    pop_ratio: np.ndarray

    @classmethod
    def build(cls, regions, horizons, path: ScenarioPath, reference_year: int):
        reg = np.tile(np.array(regions), len(horizons))
        hs = np.repeat(np.array(horizons), len(regions))
        rows = {
            "region": reg,
            "log_co2": np.log([path.co2(int(h)) for h in hs]),
            "log_gdp": np.log([path.gdp(int(h), r) for h, r in zip(hs, reg)]),
        }
        ratio = np.array([path.population(int(h), r) / path.population(reference_year, r) for h, r in zip(hs, reg)])
        return cls(tuple(regions), tuple(horizons), rows, ratio)

    def __call__(self, freq_fit: FrequencyFit, sev_fit: SeverityFit):
        """Arrays shaped (regions + world, horizons) for each quantity, plus median tags."""
        lam = freq_fit.lambda_at(self.rows)
        nu, xi = sev_fit.linear_predictors(self.rows)
        valid = xi > -1
        xi_v = np.where(valid, xi, 0.0)
        beta = np.exp(nu - np.log1p(xi_v))
        median = valid & (xi >= 1)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            mean = beta / (1 - xi_v)
        deaths = np.where(median, gpd_quantile_array(xi_v, beta, 0.5), mean) * self.pop_ratio
        # no valid GPD at this design point: left out of the world sums
        deaths = np.where(valid, deaths, np.nan)
        R, H = len(self.regions), len(self.horizons)
        n = lam.reshape(H, R).T
        d = deaths.reshape(H, R).T
        annual = n * d
        tags = median.reshape(H, R).T
        ok = valid.reshape(H, R).T
        world_n = np.where(ok, n, 0.0).sum(axis=0)
        world_a = np.where(ok, annual, 0.0).sum(axis=0)
        out_n = np.vstack([n, world_n])
        out_a = np.vstack([annual, world_a])
        with np.errstate(divide="ignore", invalid="ignore"):
            out_d = np.vstack([d, world_a / world_n])
        out_t = np.vstack([tags, tags.any(axis=0)])
        return out_n, out_d, out_a, out_t


def _replicate(index, seed, freq_fit, sev_fit, panel, cache, projector):
    rng = replicate_rng(seed, index)
    hist = simulate_history(freq_fit, sev_fit, panel, freq_fit.spec.window, rng, cache)
    try:
        counts = np.array(panel.counts.get(freq_fit.spec.response, np.zeros(len(panel), dtype=np.int64)))
        counts[cache["keep"]] = hist.counts
        sim_panel = panel.with_counts(freq_fit.spec.response, counts)
        f = fit_frequency(sim_panel, freq_fit.spec)
        start = np.concatenate([sev_fit.nu_coefficients, sev_fit.xi_coefficients])
        s = fit_severity(hist.sample, panel, sev_fit.spec, start=start if np.all(np.isfinite(start)) else None)
        return projector(f, s)
    except (ConvergenceError, DataError, DomainError, np.linalg.LinAlgError):
        return None


def _run_chunk(indices, *args):
    # boundary warnings from individual refits are noise at this level
    with threadpool_limits(1), warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryWarning)
        return [_replicate(i, *args) for i in indices]


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """Per (region, horizon) summaries for one disaster type.

    Arrays are shaped ``(len(regions) + 1, len(horizons))``; the last row is
    the world aggregate. ``replicates[q]`` (if kept) stacks the surviving
    replicates along a leading axis in index order.
    """

    disaster_type: str
    scenario: str
    regions: tuple[str, ...]
    horizons: tuple[int, ...]
    median: Mapping[str, np.ndarray]
    low: Mapping[str, np.ndarray]
    high: Mapping[str, np.ndarray]
    median_share: np.ndarray
    n_effective: int
    refit_failures: int
    config: BootstrapConfig
    replicates: Mapping[str, np.ndarray] | None = None
    warnings: tuple[str, ...] = ()

    @property
    def row_labels(self) -> tuple[str, ...]:
        return self.regions + (WORLD,)

    def get(self, quantity: str, region: str, horizon: int) -> tuple[float, float, float]:
        i = self.row_labels.index(region)
        j = self.horizons.index(horizon)
        return float(self.median[quantity][i, j]), float(self.low[quantity][i, j]), float(self.high[quantity][i, j])

    def to_csv(self, header_lines: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "disaster_type", "region", "horizon", "quantity", "stat",
                    "median", "low", "high", "n_effective"])
        for j, h in enumerate(self.horizons):
            for i, r in enumerate(self.row_labels):
                stat = "median" if self.median_share[i, j] > 0.5 else "mean"
                for q in QUANTITIES:
                    w.writerow([self.scenario, self.disaster_type, r, h, q, stat,
                                repr(float(self.median[q][i, j])), repr(float(self.low[q][i, j])),
                                repr(float(self.high[q][i, j])), self.n_effective])
        return buf.getvalue()

    def replicates_csv(self, header_lines: Sequence[str] = ()) -> str:
        """One row per (surviving replicate, region, horizon); empty body if not kept."""
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replicate", "region", "horizon"] + list(QUANTITIES))
        if self.replicates is None:
            return buf.getvalue()
        for b in range(self.n_effective):
            for j, h in enumerate(self.horizons):
                for i, r in enumerate(self.row_labels):
                    w.writerow([b, r, h] + [repr(float(self.replicates[q][b, i, j])) for q in QUANTITIES])
        return buf.getvalue()


def subsample_interval(values: np.ndarray, config: BootstrapConfig, rng: np.random.Generator):
    """Median of ``values`` (along axis 0) and the subsample-median interval.

    Draws ``subsample_count`` subsamples of ``subsample_size`` replicates
    without replacement, takes each subsample's median and returns the
    central ``interval_level`` range of those medians.
    """
    m = values.shape[0]
    size = min(config.subsample_size, m)
    picks = np.stack([rng.choice(m, size=size, replace=False) for _ in range(config.subsample_count)])
    return _interval_from_picks(values, picks, config.interval_level)


def _interval_from_picks(values, picks, level):
    med = np.median(values, axis=0)
    sub = np.median(values[picks], axis=1)
    a = (1 - level) / 2
    low = np.quantile(sub, a, axis=0)
    high = np.quantile(sub, 1 - a, axis=0)
    return med, np.minimum(low, med), np.maximum(high, med)


def run_bootstrap(
    freq_fit: FrequencyFit,
    sev_fit: SeverityFit,
    panel: AnnualPanel,
    path: ScenarioPath,
    config: BootstrapConfig = TEST_PROFILE,
    horizons: Sequence[int] = DEFAULT_HORIZONS,
    reference_year: int = 2019,
) -> BootstrapResult:
    """``config.replications`` simulate-refit-project cycles.

    ``panel`` supplies the historical covariates of the fit window. Failed
    refits are dropped and counted; more than 5% failures attach a
    :class:`RefitFailureWarning`.
    """
    horizons = tuple(int(h) for h in horizons)
    regions = tuple(freq_fit.regions)
    cache = _history_inputs(freq_fit, sev_fit, panel, freq_fit.spec.window)
    projector = _Projector.build(regions, horizons, path, reference_year)
    B = config.replications
    args = (config.seed, freq_fit, sev_fit, panel, cache, projector)
    if config.jobs == 1:
        results = _run_chunk(range(B), *args)
    else:
        n_chunks = max(1, min(B, 4 * abs(config.jobs)))
        chunks = [c for c in np.array_split(np.arange(B), n_chunks) if c.size]
        parts = Parallel(n_jobs=config.jobs)(delayed(_run_chunk)(c.tolist(), *args) for c in chunks)
        results = [r for part in parts for r in part]
    ok = [r for r in results if r is not None]
    failures = B - len(ok)
    notes = []
    if failures > FAILURE_WARNING_SHARE * B:
        msg = f"{freq_fit.spec.response}: {failures} of {B} bootstrap refits failed"
        warnings.warn(msg, RefitFailureWarning, stacklevel=2)
        notes.append(msg)
    if not ok:
        raise ConvergenceError(f"{freq_fit.spec.response}: every bootstrap refit failed")
    stacked = {q: np.stack([r[k] for r in ok]) for k, q in enumerate(QUANTITIES)}
    tags = np.stack([r[3] for r in ok]).mean(axis=0)
    m = len(ok)
    rng = _interval_rng(config.seed)
    size = min(config.subsample_size, m)
    picks = np.stack([rng.choice(m, size=size, replace=False) for _ in range(config.subsample_count)])
    med, low, high = {}, {}, {}
    for q, values in stacked.items():
        med[q], low[q], high[q] = _interval_from_picks(values, picks, config.interval_level)
    return BootstrapResult(
        disaster_type=freq_fit.spec.response,
        scenario=path.name,
        regions=regions,
        horizons=horizons,
        median=med,
        low=low,
        high=high,
        median_share=tags,
        n_effective=m,
        refit_failures=failures,
        config=config,
        replicates=stacked if config.keep_replicates else None,
        warnings=tuple(notes),
    )
