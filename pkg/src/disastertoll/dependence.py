"""Residual dependence between disaster types.

Two diagnostics: moving-window correlations of Pearson count residuals
after the covariate fits, and the chi-bar tail quantity on paired severities.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .data_model import AnnualPanel, SeveritySample
from .errors import ConvergenceError, DataError
from .frequency import FrequencyFit, fit_frequency
from .severity import SeverityFit, params_grid

DEFAULT_U_GRID = tuple(np.round(np.arange(0.50, 0.99, 0.02), 2))


# ---------------------------------------------------------------------------
# count residuals


def pearson_residuals(fit: FrequencyFit, panel: AnnualPanel) -> np.ndarray:
    """``(N - lambda) / sqrt(lambda)`` for the panel rows of the fit window."""
    keep = (panel.year >= fit.spec.window[0]) & (panel.year <= fit.spec.window[1])
    rows = {k: np.asarray(v)[keep] for k, v in panel.covariate_rows().items()}
    lam = fit.lambda_at(rows)
    n = np.asarray(panel.counts[fit.spec.response])[keep]
    return (n - lam) / np.sqrt(lam)


@dataclass(frozen=True, eq=False)
class WindowCorrelation:
    """Correlation per window (keyed by the window's last year) with a band.

    ``low``/``high`` is a Fisher-z confidence band around each estimate;
    ``null_low``/``null_high`` (optional) is a Monte Carlo band under
    independence. ``by_region`` holds the per-region correlations.
    """

    pair: tuple[str, str]
    window_length: int
    series: Mapping[int, float]
    low: Mapping[int, float]
    high: Mapping[int, float]
    by_region: Mapping[str, Mapping[int, float]] = field(default_factory=dict)
    null_low: Mapping[int, float] | None = None
    null_high: Mapping[int, float] | None = None

    def inside_null_share(self) -> float:
        if self.null_low is None:
            raise ValueError("no null band attached")
        inside = [self.null_low[e] <= v <= self.null_high[e] for e, v in self.series.items()]
        return float(np.mean(inside))

    def to_csv(self, header_lines: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pair", "scope", "window_end", "value", "low", "high", "null_low", "null_high", "variant"])
        name = f"{self.pair[0]}~{self.pair[1]}"
        for e, v in self.series.items():
            nl = repr(self.null_low[e]) if self.null_low else ""
            nh = repr(self.null_high[e]) if self.null_high else ""
            w.writerow([name, "pooled", e, repr(v), repr(self.low[e]), repr(self.high[e]), nl, nh, "residual"])
        for r, ser in self.by_region.items():
            for e, v in ser.items():
                w.writerow([name, r, e, repr(v), "", "", "", "", "residual"])
        return buf.getvalue()


def _corr(a, b) -> float:
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return float("nan")
    return float(np.clip(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb), -1.0, 1.0))


def _window_corrs(ra, rb, years, regions_arr, regions, ends, L, per_region=False):
    pooled, by_region = {}, {r: {} for r in regions} if per_region else {}
    for e in ends:
        m = (years > e - L) & (years <= e)
        pooled[e] = _corr(ra[m], rb[m])
        if per_region:
            for r in regions:
                mr = m & (regions_arr == r)
                by_region[r][e] = _corr(ra[mr], rb[mr])
    return pooled, by_region


def count_residual_correlation(
    fit_a: FrequencyFit,
    fit_b: FrequencyFit,
    panel: AnnualPanel,
    window_length: int = 20,
    level: float = 0.95,
) -> WindowCorrelation:
    """Moving-window correlation of Pearson residuals of two count fits.

    Within each window the (year, region) residual pairs of all regions are
    pooled; per-region correlations are reported alongside.
    """
    if fit_a.spec.window != fit_b.spec.window:
        raise ValueError("fits cover different windows")
    start, stop = fit_a.spec.window
    L = int(window_length)
    if L < 3 or L > stop - start + 1:
        raise ValueError(f"window length {L} does not fit in the study range {start}..{stop}")
    keep = (panel.year >= start) & (panel.year <= stop)
    years, regions_arr = panel.year[keep], panel.region[keep]
    ra, rb = pearson_residuals(fit_a, panel), pearson_residuals(fit_b, panel)
    ends = list(range(start + L - 1, stop + 1))
    pooled, by_region = _window_corrs(ra, rb, years, regions_arr, panel.regions, ends, L, per_region=True)
    n = L * len(panel.regions)
    z = stats.norm.ppf(0.5 + level / 2) / math.sqrt(n - 3)
    low = {e: float(np.tanh(np.arctanh(np.clip(v, -0.999999, 0.999999)) - z)) for e, v in pooled.items()}
    high = {e: float(np.tanh(np.arctanh(np.clip(v, -0.999999, 0.999999)) + z)) for e, v in pooled.items()}
    return WindowCorrelation((fit_a.spec.response, fit_b.spec.response), L, pooled, low, high, by_region)


def residual_null_band(
    fit_a: FrequencyFit,
    fit_b: FrequencyFit,
    panel: AnnualPanel,
    window_length: int = 20,
    *,
    n_sim: int = 500,
    level: float = 0.95,
    rng: np.random.Generator,
    simultaneous: bool = True,
    refit: bool = True,
) -> tuple[dict[int, float], dict[int, float]]:
    """Monte Carlo band for window correlations when the two types are independent.

    Counts are simulated independently from each fit's intensities, refitted
    (``refit=True``) and the window correlations recomputed. With
    ``simultaneous=True`` the band is ``+/- q`` where ``q`` is the ``level``
    quantile of the largest absolute correlation across windows, so the
    whole curve stays inside with probability ``level`` under the null.
    """
    start, stop = fit_a.spec.window
    L = int(window_length)
    keep = (panel.year >= start) & (panel.year <= stop)
    rows = {k: np.asarray(v)[keep] for k, v in panel.covariate_rows().items()}
    years, regions_arr = panel.year[keep], panel.region[keep]
    lam_a, lam_b = fit_a.lambda_at(rows), fit_b.lambda_at(rows)
    ends = list(range(start + L - 1, stop + 1))
    sims = np.full((n_sim, len(ends)), np.nan)
    for s in range(n_sim):
        res = []
        for fit, lam in ((fit_a, lam_a), (fit_b, lam_b)):
            counts = rng.poisson(lam)
            if refit:
                full = np.zeros(len(panel), dtype=np.int64)
                full[keep] = counts
                try:
                    lam_hat = fit_frequency(panel.with_counts(fit.spec.response, full), fit.spec).lambda_at(rows)
                except (DataError, ConvergenceError):
                    break  # a draw the model cannot be refitted on is left out
            else:
                lam_hat = lam
            res.append((counts - lam_hat) / np.sqrt(lam_hat))
        if len(res) < 2:
            continue
        pooled, _ = _window_corrs(res[0], res[1], years, regions_arr, panel.regions, ends, L)
        sims[s] = [pooled[e] for e in ends]
    sims = sims[~np.all(np.isnan(sims), axis=1)]
    if not len(sims):
        raise ConvergenceError("no null simulation could be refitted")
    if simultaneous:
        q = float(np.quantile(np.nanmax(np.abs(sims), axis=1), level))
        return {e: -q for e in ends}, {e: q for e in ends}
    a = (1 - level) / 2
    lo, hi = np.nanquantile(sims, a, axis=0), np.nanquantile(sims, 1 - a, axis=0)
    return dict(zip(ends, map(float, lo))), dict(zip(ends, map(float, hi)))


def with_null_band(corr: WindowCorrelation, band) -> WindowCorrelation:
    lo, hi = band
    return WindowCorrelation(corr.pair, corr.window_length, corr.series, corr.low, corr.high,
                             corr.by_region, lo, hi)


# ---------------------------------------------------------------------------
# chi-bar


@dataclass(frozen=True, eq=False)
class ChiBarCurve:
    """``values[u]`` is ``nan`` where there is no joint exceedance (listed in ``gaps``)."""

    pair: tuple[str, str]
    u_grid: tuple[float, ...]
    values: Mapping[float, float]
    variant: str
    conventional: bool = False
    low: Mapping[float, float] | None = None
    high: Mapping[float, float] | None = None
    n_pairs: int = 0

    @property
    def gaps(self) -> tuple[float, ...]:
        return tuple(u for u in self.u_grid if not math.isfinite(self.values[u]))

    def to_csv(self, header_lines: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pair", "u", "value", "low", "high", "variant"])
        name = f"{self.pair[0]}~{self.pair[1]}"
        for u in self.u_grid:
            v = self.values[u]
            lo = self.low[u] if self.low else float("nan")
            hi = self.high[u] if self.high else float("nan")
            cells = ["gap" if not math.isfinite(x) else repr(float(x)) for x in (v, lo, hi)]
            w.writerow([name, repr(float(u)), *cells, self.variant])
        return buf.getvalue()


def empirical_margins(x) -> np.ndarray:
    """Ranks / (n + 1), ties sharing their average rank."""
    x = np.asarray(x, dtype=float)
    return stats.rankdata(x) / (len(x) + 1)


def _chi_bar_values(fx, fy, u_grid, conventional):
    out = np.full(len(u_grid), np.nan)
    for k, u in enumerate(u_grid):
        px = np.mean(fx > u)
        pj = np.mean((fx > u) & (fy > u))
        if 0 < pj < 1 and 0 < px < 1:
            out[k] = 2.0 * math.log(px) / math.log(pj)
    return out - 1.0 if conventional else out


def chi_bar(
    sample_a,
    sample_b,
    u_grid: Sequence[float] = DEFAULT_U_GRID,
    variant: str = "raw",
    *,
    margins: tuple[np.ndarray, np.ndarray] | None = None,
    conventional: bool = False,
    band_resamples: int = 0,
    level: float = 0.95,
    rng: np.random.Generator | None = None,
    pair: tuple[str, str] = ("a", "b"),
    min_pairs: int = 50,
) -> ChiBarCurve:
    """``2 log P{F_X > u} / log P{F_X > u, F_Y > u}`` over ``u_grid``.

    ``variant="raw"`` uses empirical margins. ``variant="filtered"`` needs
    ``margins``: each observation's probability under its fitted
    distribution (see :func:`filtered_margins`). Independence gives 1 and
    comonotonicity 2; ``conventional=True`` subtracts 1 so that
    independence maps to 0. ``band_resamples > 0`` adds a percentile band
    from resampling the pairs.
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    if len(a) < min_pairs:
        raise ValueError(f"need at least {min_pairs} pairs, got {len(a)}")
    u_grid = tuple(float(u) for u in u_grid)
    if any(not 0 < u < 1 for u in u_grid):
        raise ValueError("u_grid must lie in (0, 1)")
    if variant == "raw":
        fx, fy = empirical_margins(a), empirical_margins(b)
    elif variant == "filtered":
        if margins is None:
            raise ValueError("filtered variant needs fitted margins")
        fx, fy = (np.asarray(m, dtype=float) for m in margins)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    vals = _chi_bar_values(fx, fy, u_grid, conventional)
    low = high = None
    if band_resamples:
        rng = rng or np.random.default_rng(0)
        n = len(a)
        boot = np.empty((band_resamples, len(u_grid)))
        for s in range(band_resamples):
            i = rng.integers(0, n, n)
            if variant == "raw":
                bx, by = empirical_margins(a[i]), empirical_margins(b[i])
            else:
                bx, by = fx[i], fy[i]
            boot[s] = _chi_bar_values(bx, by, u_grid, conventional)
        q = (1 - level) / 2
        boot[~np.isfinite(boot)] = np.nan
        lo, hi = np.full(len(u_grid), np.nan), np.full(len(u_grid), np.nan)
        seen = ~np.all(np.isnan(boot), axis=0)  # a u with no joint exceedance in any resample stays a gap
        if seen.any():
            lo[seen] = np.nanquantile(boot[:, seen], q, axis=0)
            hi[seen] = np.nanquantile(boot[:, seen], 1 - q, axis=0)
        low, high = dict(zip(u_grid, map(float, lo))), dict(zip(u_grid, map(float, hi)))
    return ChiBarCurve(pair, u_grid, dict(zip(u_grid, map(float, vals))), variant, conventional, low, high, len(a))


def filtered_margins(fit: SeverityFit, sample: SeveritySample) -> np.ndarray:
    """Probability integral transform of each event under its fitted GPD."""
    xi, beta = params_grid(fit, sample.region, sample.log_gdp, sample.log_co2)
    z = np.maximum(sample.deaths / beta, 0.0)
    small = np.abs(xi) < 1e-8
    xi_s = np.where(small, 1.0, xi)
    with np.errstate(invalid="ignore", divide="ignore"):
        h = np.where(small, z, np.log1p(np.maximum(xi_s * z, -1.0)) / xi_s)
    return -np.expm1(-h)


def pair_annual_maxima(
    sample_a: SeveritySample,
    sample_b: SeveritySample,
    margins_a: np.ndarray | None = None,
    margins_b: np.ndarray | None = None,
):
    """Pair two types by (year, region) annual maxima.

    Returns ``(max_a, max_b, f_a, f_b, keys)``. When event margins are given,
    the margin of a maximum over ``k`` events of the same cell is ``F**k``.
    """
    def reduce(sample, margins):
        out = {}
        for j in range(len(sample)):
            key = (int(sample.year[j]), str(sample.region[j]))
            f = margins[j] if margins is not None else np.nan
            y, fmax, k = out.get(key, (-np.inf, np.nan, 0))
            if sample.deaths[j] > y:
                y, fmax = sample.deaths[j], f
            out[key] = (y, fmax, k + 1)
        return out

    ra, rb = reduce(sample_a, margins_a), reduce(sample_b, margins_b)
    keys = sorted(set(ra) & set(rb))
    ya = np.array([ra[k][0] for k in keys])
    yb = np.array([rb[k][0] for k in keys])
    fa = np.array([ra[k][1] ** ra[k][2] for k in keys])
    fb = np.array([rb[k][1] ** rb[k][2] for k in keys])
    return ya, yb, fa, fb, keys
