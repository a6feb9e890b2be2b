"""Covariate-dependent generalized Pareto regression for deaths per disaster.

Both the orthogonal scale ``nu`` and the tail index ``xi`` are linear in a
design built from region indicators and log regional GDP per capita. With
``xi_link="log1p"`` the linear predictor is ``log(1 + xi)``, which keeps
``xi > -1`` by construction.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data_model import AnnualPanel, RescaledEvent, SeveritySample
from .design import column_names, design_matrix, single_row, validate_terms
from .distributions import GpdOrthoParams, GpdParams, gpd_pwm, gpd_terms
from .errors import BoundaryError, ConvergenceError, CoverageError, DegenerateDataError, DomainError
from .optimize import covariance_from_hessian, newton_maximize
from .regions import REGIONS

LINKS = ("identity", "log1p")
MIN_EVENTS_PER_PARAMETER = 10
# a stalled search is accepted as a boundary fit only this close to xi = -1
BOUNDARY_GAP = 0.05


class BoundaryWarning(UserWarning):
    """Fitted tail index at or below -1 somewhere in the covariate range."""


@dataclass(frozen=True)
class SeveritySpec:
    response: str
    nu_terms: tuple[str, ...] = ("intercept",)
    xi_terms: tuple[str, ...] = ("intercept",)
    xi_link: str = "identity"
    window: tuple[int, int] = (1960, 2019)

    def __post_init__(self):
        object.__setattr__(self, "nu_terms", validate_terms(self.nu_terms))
        object.__setattr__(self, "xi_terms", validate_terms(self.xi_terms))
        object.__setattr__(self, "window", tuple(int(y) for y in self.window))
        if self.xi_link not in LINKS:
            raise ValueError(f"xi_link must be one of {LINKS}, got {self.xi_link!r}")


def xi_from_eta(eta, link: str):
    return np.expm1(eta) if link == "log1p" else np.asarray(eta, dtype=float)


def eta_from_xi(xi, link: str):
    return np.log1p(xi) if link == "log1p" else np.asarray(xi, dtype=float)


@dataclass(frozen=True, eq=False)
class SeverityFit:
    spec: SeveritySpec
    nu_coefficients: np.ndarray
    xi_coefficients: np.ndarray
    std_errors: np.ndarray
    loglik: float
    regions: tuple[str, ...] = REGIONS
    covariance: np.ndarray | None = None
    gradient_norm: float = 0.0
    n_obs: int = 0
    iterations: int = 0
    panel_cells: Mapping[str, np.ndarray] | None = None
    warnings: tuple[str, ...] = ()

    @property
    def nu_columns(self) -> list[str]:
        return column_names(self.spec.nu_terms, self.regions)

    @property
    def xi_columns(self) -> list[str]:
        return column_names(self.spec.xi_terms, self.regions)

    @property
    def n_params(self) -> int:
        return len(self.nu_coefficients) + len(self.xi_coefficients)

    @property
    def nu_std_errors(self) -> np.ndarray:
        return self.std_errors[: len(self.nu_coefficients)]

    @property
    def xi_std_errors(self) -> np.ndarray:
        return self.std_errors[len(self.nu_coefficients):]

    @property
    def aic(self) -> float:
        return 2 * self.n_params - 2 * self.loglik

    @property
    def bic(self) -> float:
        return self.n_params * math.log(max(self.n_obs, 1)) - 2 * self.loglik

    @classmethod
    def from_coefficients(cls, spec: SeveritySpec, nu_coefficients, xi_coefficients, regions=REGIONS):
        nu = np.asarray(nu_coefficients, dtype=float)
        xi = np.asarray(xi_coefficients, dtype=float)
        if len(nu) != len(column_names(spec.nu_terms, regions)):
            raise ValueError(f"nu coefficients do not match terms {spec.nu_terms}")
        if len(xi) != len(column_names(spec.xi_terms, regions)):
            raise ValueError(f"xi coefficients do not match terms {spec.xi_terms}")
        return cls(spec, nu, xi, np.full(len(nu) + len(xi), np.nan), float("nan"), tuple(regions))

    def linear_predictors(self, rows: Mapping[str, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        """``(nu, xi)`` arrays at the design rows (link applied to xi)."""
        nu = design_matrix(self.spec.nu_terms, rows, self.regions) @ self.nu_coefficients
        eta = design_matrix(self.spec.xi_terms, rows, self.regions) @ self.xi_coefficients
        return nu, xi_from_eta(eta, self.spec.xi_link)

    @cached_property
    def fitted_params(self) -> dict[tuple[int, str], GpdParams]:
        """GPD parameters at every panel cell of the fit window where ``xi > -1``."""
        if self.panel_cells is None:
            return {}
        nu, xi = self.linear_predictors(self.panel_cells)
        out = {}
        for y, r, n, x in zip(self.panel_cells["year"], self.panel_cells["region"], nu, xi):
            if x > -1:
                out[(int(y), str(r))] = GpdOrthoParams(float(n), float(x)).to_standard()
        return out

    def to_dict(self) -> dict:
        k = len(self.nu_coefficients)
        return {
            "kind": "severity",
            "response": self.spec.response,
            "nu_terms": list(self.spec.nu_terms),
            "xi_terms": list(self.spec.xi_terms),
            "xi_link": self.spec.xi_link,
            "window": list(self.spec.window),
            "regions": list(self.regions),
            "nu": {
                "coefficients": dict(zip(self.nu_columns, map(float, self.nu_coefficients))),
                "std_errors": dict(zip(self.nu_columns, map(float, self.std_errors[:k]))),
            },
            "xi": {
                "coefficients": dict(zip(self.xi_columns, map(float, self.xi_coefficients))),
                "std_errors": dict(zip(self.xi_columns, map(float, self.std_errors[k:]))),
            },
            "loglik": self.loglik,
            "aic": self.aic,
            "bic": self.bic,
            "n_obs": self.n_obs,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SeverityFit":
        spec = SeveritySpec(
            doc["response"], tuple(doc["nu_terms"]), tuple(doc["xi_terms"]), doc["xi_link"], tuple(doc["window"])
        )
        regions = tuple(doc.get("regions", REGIONS))
        nu_cols = column_names(spec.nu_terms, regions)
        xi_cols = column_names(spec.xi_terms, regions)
        nu = np.array([doc["nu"]["coefficients"][c] for c in nu_cols], dtype=float)
        xi = np.array([doc["xi"]["coefficients"][c] for c in xi_cols], dtype=float)
        se = [doc["nu"].get("std_errors", {}).get(c, np.nan) for c in nu_cols]
        se += [doc["xi"].get("std_errors", {}).get(c, np.nan) for c in xi_cols]
        return cls(
            spec, nu, xi, np.array(se, dtype=float), float(doc.get("loglik", np.nan)), regions,
            n_obs=int(doc.get("n_obs", 0)), warnings=tuple(doc.get("warnings", ())),
        )


# ---------------------------------------------------------------------------
# likelihood


def severity_loglik(theta, X_nu, X_xi, y, link: str = "identity", order: int = 0):
    """Pooled GPD log-likelihood of ``theta = (nu coefficients, xi coefficients)``.

    ``order=1`` adds the gradient and ``order=2`` the Hessian. Returns
    ``-inf`` (and no derivatives) when any observation leaves the support.
    """
    theta = np.asarray(theta, dtype=float)
    k = X_nu.shape[1]
    nu = X_nu @ theta[:k]
    eta = X_xi @ theta[k:]
    if link == "log1p":
        if np.any(eta > 50):
            return -np.inf if order == 0 else (-np.inf, None, None)[: order + 1]
        xi = np.expm1(eta)
        dxi = xi + 1.0
    else:
        xi = eta
        dxi = np.ones_like(eta)
    terms = gpd_terms(nu, xi, y, order=min(order, 2))
    ll = terms[0]
    if not np.all(np.isfinite(ll)):
        return -np.inf if order == 0 else (-np.inf, None, None)[: order + 1]
    value = float(ll.sum())
    if order == 0:
        return value
    g_nu, g_xi = terms[1], terms[2]
    grad = np.concatenate([X_nu.T @ g_nu, X_xi.T @ (g_xi * dxi)])
    if order == 1:
        return value, grad
    h_nunu, h_nuxi, h_xixi = terms[3], terms[4], terms[5]
    w_xixi = h_xixi * dxi * dxi + (g_xi * dxi if link == "log1p" else 0.0)
    A = (X_nu.T * h_nunu) @ X_nu
    B = (X_nu.T * (h_nuxi * dxi)) @ X_xi
    C = (X_xi.T * w_xixi) @ X_xi
    hess = np.block([[A, B], [B.T, C]])
    return value, grad, hess


def _as_sample(events, panel: AnnualPanel, spec: SeveritySpec) -> SeveritySample:
    if isinstance(events, SeveritySample):
        sample = events
    else:
        chosen = [e for e in events if e.disaster_type == spec.response]
        bad = [e for e in chosen if not e.rescaled_deaths > 0]
        if bad:
            raise DomainError(
                f"{len(bad)} event(s) with non-positive deaths passed to the severity fit "
                f"(first: {bad[0].base.event_id}); filter with severity_sample"
            )
        years = np.array([e.year for e in chosen], dtype=int)
        regions = np.array([e.region for e in chosen], dtype=str)
        rows = panel.rows(years, regions) if chosen else np.zeros(0, dtype=int)
        sample = SeveritySample(
            np.array([e.rescaled_deaths for e in chosen], dtype=float), years, regions,
            panel.log_gdp[rows], panel.log_co2[rows],
        )
    if np.any(~(sample.deaths > 0)):
        raise DomainError("severity sample contains non-positive deaths")
    keep = (sample.year >= spec.window[0]) & (sample.year <= spec.window[1])
    if not keep.all():
        sample = SeveritySample(*(np.asarray(a)[keep] for a in (
            sample.deaths, sample.year, sample.region, sample.log_gdp, sample.log_co2)))
    return sample


def _panel_cells(panel: AnnualPanel, window) -> dict[str, np.ndarray]:
    keep = (panel.year >= window[0]) & (panel.year <= window[1])
    return {
        "year": panel.year[keep],
        "region": panel.region[keep],
        "log_gdp": panel.log_gdp[keep],
        "log_co2": panel.log_co2[keep],
    }


def fit_severity(
    events: Iterable[RescaledEvent] | SeveritySample,
    panel: AnnualPanel,
    spec: SeveritySpec,
    *,
    min_events_per_parameter: int = MIN_EVENTS_PER_PARAMETER,
    gtol: float = 1e-5,
    max_iter: int = 500,
    start: np.ndarray | None = None,
) -> SeverityFit:
    """Joint maximum likelihood for the ``nu`` and ``xi`` regressions.

    ``events`` is either a :class:`SeveritySample` or rescaled events of the
    spec's disaster type, all with positive deaths. Standard errors come from
    the inverse observed information. Under the identity link a
    :class:`BoundaryWarning` is emitted (and recorded on the fit) if the
    fitted tail index is ``<= -1`` at any panel cell of the window.
    """
    if not (panel.first_year <= spec.window[0] and spec.window[1] <= panel.last_year):
        raise CoverageError(f"panel {panel.first_year}..{panel.last_year} does not cover window {spec.window}")
    sample = _as_sample(events, panel, spec)
    rows = sample.covariate_rows()
    X_nu = design_matrix(spec.nu_terms, rows, panel.regions)
    X_xi = design_matrix(spec.xi_terms, rows, panel.regions)
    p = X_nu.shape[1] + X_xi.shape[1]
    n = len(sample)
    if n < min_events_per_parameter * p:
        raise DegenerateDataError(
            f"{spec.response}: {n} positive-death events for {p} parameters "
            f"(need at least {min_events_per_parameter} per parameter)"
        )
    for name, X in (("nu", X_nu), ("xi", X_xi)):
        empty = np.flatnonzero(~np.any(X != 0, axis=0))
        if empty.size:
            cols = column_names(spec.nu_terms if name == "nu" else spec.xi_terms, panel.regions)
            raise DegenerateDataError(f"{spec.response}: no events inform {name} column(s) {[cols[i] for i in empty]}")
    y = sample.deaths
    if start is None:
        start = np.zeros(p)
        pwm = gpd_pwm(y)
        start[0] = math.log1p(pwm.xi) + math.log(pwm.beta)
        start[X_nu.shape[1]] = float(eta_from_xi(pwm.xi, spec.xi_link))
        # a PWM start can still leave the largest points outside a short tail
        if not np.isfinite(severity_loglik(start, X_nu, X_xi, y, spec.xi_link)):
            start[X_nu.shape[1]] = float(eta_from_xi(0.5, spec.xi_link))

    def objective(theta, order):
        return severity_loglik(theta, X_nu, X_xi, y, spec.xi_link, order)

    res = newton_maximize(objective, start, gtol=gtol, max_iter=max_iter, stall_window=20)
    k = X_nu.shape[1]
    notes = []
    if res.stalled:
        xi_obs = xi_from_eta(X_xi @ res.x[k:], spec.xi_link)
        near = 1.0 + xi_obs < BOUNDARY_GAP
        if not near.any():
            raise ConvergenceError(f"{spec.response}: optimizer stalled away from the xi = -1 boundary", res.trace, res.x)
        regions = sorted(set(sample.region[near]))
        notes.append(
            f"{spec.response}: likelihood increases towards xi = -1 in {', '.join(regions)} "
            f"(min xi {xi_obs.min():.4f}); boundary estimates, standard errors unreliable"
        )
    try:
        cov = covariance_from_hessian(res.hessian)
    except ConvergenceError:
        if not res.stalled:
            raise
        cov = np.full((p, p), np.nan)
    cells = _panel_cells(panel, spec.window)
    fit = SeverityFit(
        spec=spec,
        nu_coefficients=res.x[:k],
        xi_coefficients=res.x[k:],
        std_errors=np.sqrt(np.diag(cov)),
        loglik=res.value,
        regions=panel.regions,
        covariance=cov,
        gradient_norm=res.gradient_norm,
        n_obs=n,
        iterations=res.iterations,
        panel_cells=cells,
    )
    if spec.xi_link == "identity":
        _, xi = fit.linear_predictors(cells)
        if np.any(xi <= -1):
            bad = np.flatnonzero(xi <= -1)
            notes.append(
                f"{spec.response}: fitted tail index <= -1 at {bad.size} panel cell(s), e.g. "
                f"{cells['region'][bad[0]]} {cells['year'][bad[0]]} (xi={xi[bad[0]]:.3f})"
            )
    for msg in notes:
        warnings.warn(msg, BoundaryWarning, stacklevel=2)
    object.__setattr__(fit, "warnings", tuple(notes))
    return fit


def severity_params_at(fit: SeverityFit, covariate_row) -> GpdParams:
    """GPD parameters at one design point.

    ``covariate_row`` is a mapping with ``region`` and ``log_gdp`` (and
    ``log_co2`` if the spec uses it), or a pair of design vectors
    ``(nu_row, xi_row)``.
    """
    if isinstance(covariate_row, Mapping):
        kw = dict(
            region=covariate_row["region"],
            log_co2=covariate_row.get("log_co2", np.nan),
            log_gdp=covariate_row.get("log_gdp", np.nan),
            regions=fit.regions,
        )
        nu_row = single_row(fit.spec.nu_terms, **kw)
        xi_row = single_row(fit.spec.xi_terms, **kw)
    else:
        nu_row, xi_row = (np.asarray(r, dtype=float) for r in covariate_row)
        if nu_row.shape != fit.nu_coefficients.shape or xi_row.shape != fit.xi_coefficients.shape:
            raise ValueError("design rows do not match the fit's coefficient vectors")
    nu = float(nu_row @ fit.nu_coefficients)
    xi = float(xi_from_eta(float(xi_row @ fit.xi_coefficients), fit.spec.xi_link))
    if not xi > -1:
        raise BoundaryError(f"tail index {xi:.4g} <= -1 at this design point")
    return GpdOrthoParams(nu, xi).to_standard()


def params_grid(fit: SeverityFit, regions: Sequence[str], log_gdp: Sequence[float], log_co2: Sequence[float]):
    """Vectorised :func:`severity_params_at`: arrays ``(xi, beta)``."""
    rows = {"region": np.asarray(regions), "log_gdp": np.asarray(log_gdp, float), "log_co2": np.asarray(log_co2, float)}
    nu, xi = fit.linear_predictors(rows)
    bad = ~(xi > -1)
    if np.any(bad):
        raise BoundaryError(f"{fit.spec.response}: tail index <= -1 at {int(bad.sum())} of {bad.size} design points")
    return xi, np.exp(nu - np.log1p(xi))
