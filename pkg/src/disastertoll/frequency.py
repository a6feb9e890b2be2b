"""Poisson regression (log link) for annual disaster counts."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln, xlogy

from .data_model import AnnualPanel
from .design import column_names, design_matrix, single_row, validate_terms
from .errors import ConvergenceError, CoverageError, DegenerateDataError
from .optimize import covariance_from_hessian, newton_maximize
from .regions import REGIONS

DEFAULT_FREQUENCY_TERMS = ("intercept", "log_co2:region")


@dataclass(frozen=True)
class FrequencySpec:
    response: str
    terms: tuple[str, ...] = DEFAULT_FREQUENCY_TERMS
    window: tuple[int, int] = (1960, 2019)

    def __post_init__(self):
        object.__setattr__(self, "terms", validate_terms(self.terms))
        object.__setattr__(self, "window", tuple(int(y) for y in self.window))


@dataclass(frozen=True, eq=False)
class FrequencyFit:
    spec: FrequencySpec
    coefficients: np.ndarray
    std_errors: np.ndarray
    loglik: float
    adj_r2: float
    columns: tuple[str, ...]
    regions: tuple[str, ...] = REGIONS
    fitted_lambda: Mapping[tuple[int, str], float] = field(default_factory=dict)
    covariance: np.ndarray | None = None
    gradient_norm: float = 0.0
    n_obs: int = 0
    iterations: int = 0

    @property
    def n_params(self) -> int:
        return len(self.coefficients)

    @classmethod
    def from_coefficients(cls, spec: FrequencySpec, coefficients, regions: Sequence[str] = REGIONS):
        """A fit carrying given coefficients (calibration, simulation, what-if)."""
        coefficients = np.asarray(coefficients, dtype=float)
        cols = tuple(column_names(spec.terms, regions))
        if len(cols) != len(coefficients):
            raise ValueError(f"expected {len(cols)} coefficients for {spec.terms}, got {len(coefficients)}")
        return cls(
            spec=spec, coefficients=coefficients, std_errors=np.full(len(cols), np.nan),
            loglik=float("nan"), adj_r2=float("nan"), columns=cols, regions=tuple(regions),
        )

    def named(self) -> dict[str, float]:
        return dict(zip(self.columns, map(float, self.coefficients)))

    def design(self, rows: Mapping[str, np.ndarray]) -> np.ndarray:
        return design_matrix(self.spec.terms, rows, self.regions)

    def lambda_at(self, rows: Mapping[str, np.ndarray]) -> np.ndarray:
        return np.exp(self.design(rows) @ self.coefficients)

    def to_dict(self) -> dict:
        return {
            "kind": "frequency",
            "response": self.spec.response,
            "terms": list(self.spec.terms),
            "window": list(self.spec.window),
            "regions": list(self.regions),
            "coefficients": self.named(),
            "std_errors": dict(zip(self.columns, map(float, self.std_errors))),
            "loglik": self.loglik,
            "adj_r2": self.adj_r2,
            "n_obs": self.n_obs,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FrequencyFit":
        spec = FrequencySpec(doc["response"], tuple(doc["terms"]), tuple(doc["window"]))
        regions = tuple(doc.get("regions", REGIONS))
        cols = column_names(spec.terms, regions)
        coef = np.array([doc["coefficients"][c] for c in cols])
        fit = cls.from_coefficients(spec, coef, regions)
        se = doc.get("std_errors") or {}
        return cls(
            spec=spec, coefficients=coef,
            std_errors=np.array([se.get(c, np.nan) for c in cols], dtype=float),
            loglik=float(doc.get("loglik", np.nan)), adj_r2=float(doc.get("adj_r2", np.nan)),
            columns=fit.columns, regions=regions, n_obs=int(doc.get("n_obs", 0)),
        )


def poisson_loglik(X: np.ndarray, counts: np.ndarray, coef: np.ndarray) -> float:
    eta = X @ coef
    return float(np.sum(counts * eta - np.exp(eta) - gammaln(counts + 1.0)))


def _objective(X, counts, const):
    def f(beta, order):
        eta = X @ beta
        if np.any(eta > 700):
            return -np.inf if order == 0 else (-np.inf, None, None)
        lam = np.exp(eta)
        value = float(counts @ eta - lam.sum() - const)
        if order == 0:
            return value
        grad = X.T @ (counts - lam)
        hess = -(X.T * lam) @ X
        return value, grad, hess

    return f


def poisson_deviance(counts: np.ndarray, lam: np.ndarray) -> float:
    return float(2.0 * np.sum(xlogy(counts, counts / lam) - (counts - lam)))


def fit_poisson(X: np.ndarray, counts: np.ndarray, *, gtol: float = 1e-6, max_iter: int = 500):
    """Maximum-likelihood Poisson GLM with log link.

    Returns ``(coefficients, covariance, loglik, optimizer result)``. The
    first design column must be the intercept.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.sum() == 0:
        raise DegenerateDataError("all counts are zero")
    for j in range(1, X.shape[1]):
        # a column living on a subset of rows with no events there has its MLE at -infinity
        support = X[:, j] != 0
        if not support.all() and counts[support].sum() == 0:
            raise DegenerateDataError(f"no events in the rows informing design column {j}")
    start = np.zeros(X.shape[1])
    start[0] = np.log(counts.mean())
    const = float(gammaln(counts + 1.0).sum())
    res = newton_maximize(_objective(X, counts, const), start, gtol=gtol, max_iter=max_iter)
    cov = covariance_from_hessian(res.hessian)
    return res.x, cov, res.value, res


def _window_rows(panel: AnnualPanel, window: tuple[int, int]) -> np.ndarray:
    start, stop = window
    if start < panel.first_year or stop > panel.last_year:
        raise CoverageError(f"panel {panel.first_year}..{panel.last_year} does not cover window {window}")
    years = panel.year
    return np.flatnonzero((years >= start) & (years <= stop))


def fit_frequency(panel: AnnualPanel, spec: FrequencySpec) -> FrequencyFit:
    """Fit log(lambda) = design row . coefficients by maximum likelihood.

    Standard errors come from the inverse observed information. ``adj_r2`` is
    the deviance pseudo-R2 adjusted for the number of parameters.
    """
    if spec.response not in panel.counts:
        raise CoverageError(f"panel has no counts for {spec.response!r}")
    idx = _window_rows(panel, spec.window)
    rows = {k: np.asarray(v)[idx] for k, v in panel.covariate_rows().items()}
    counts = np.asarray(panel.counts[spec.response])[idx].astype(float)
    X = design_matrix(spec.terms, rows, panel.regions)
    coef, cov, loglik, res = fit_poisson(X, counts)
    lam = np.exp(X @ coef)
    n, p = X.shape
    dev = poisson_deviance(counts, lam)
    null_dev = poisson_deviance(counts, np.full(n, counts.mean()))
    adj_r2 = 1.0 - (n - 1) / (n - p) * dev / null_dev if null_dev > 0 else float("nan")
    years = panel.year[idx]
    regions = panel.region[idx]
    return FrequencyFit(
        spec=spec,
        coefficients=coef,
        std_errors=np.sqrt(np.diag(cov)),
        loglik=loglik,
        adj_r2=float(adj_r2),
        columns=tuple(column_names(spec.terms, panel.regions)),
        regions=panel.regions,
        fitted_lambda={(int(y), str(r)): float(v) for y, r, v in zip(years, regions, lam)},
        covariance=cov,
        gradient_norm=res.gradient_norm,
        n_obs=n,
        iterations=res.iterations,
    )


def predict_lambda(fit: FrequencyFit, covariate_row) -> float:
    """exp(row . coefficients).

    ``covariate_row`` is either a design vector matching the fit's columns or
    a mapping with ``region`` and ``log_co2`` (and ``log_gdp`` if used).
    """
    if isinstance(covariate_row, Mapping):
        row = single_row(
            fit.spec.terms, covariate_row["region"], covariate_row.get("log_co2", np.nan),
            covariate_row.get("log_gdp", np.nan), fit.regions,
        )
    else:
        row = np.asarray(covariate_row, dtype=float)
        if row.shape != fit.coefficients.shape:
            raise ValueError(f"design row has {row.size} entries, fit has {fit.n_params} coefficients")
    return float(np.exp(row @ fit.coefficients))
