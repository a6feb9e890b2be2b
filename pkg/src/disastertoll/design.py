"""Design matrices for the regression terms used by the frequency and severity models.

Term vocabulary:

``intercept``
    constant column.
``log_co2`` / ``log_gdp``
    one common slope on the log covariate.
``region``
    indicators for every region except the first (the baseline).
``log_co2:region`` / ``log_gdp:region``
    one slope per region: covariate times region indicator.
"""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .regions import REGIONS

TERMS = ("intercept", "log_co2", "log_gdp", "region", "log_co2:region", "log_gdp:region")


def validate_terms(terms: Sequence[str]) -> tuple[str, ...]:
    terms = tuple(terms)
    if not terms:
        raise ValueError("term list is empty")
    if "intercept" not in terms:
        raise ValueError("an intercept term is required")
    if len(set(terms)) != len(terms):
        raise ValueError(f"duplicate terms in {terms}")
    unknown = [t for t in terms if t not in TERMS]
    if unknown:
        raise ValueError(f"unknown term(s) {unknown}; choose from {TERMS}")
    # canonical order keeps the intercept first
    return tuple(t for t in TERMS if t in terms)


def column_names(terms: Sequence[str], regions: Sequence[str] = REGIONS) -> list[str]:
    names: list[str] = []
    for term in validate_terms(terms):
        if term == "intercept":
            names.append("intercept")
        elif term in ("log_co2", "log_gdp"):
            names.append(term)
        elif term == "region":
            names.extend(f"region[{r}]" for r in regions[1:])
        else:
            cov = term.split(":")[0]
            names.extend(f"{cov}:region[{r}]" for r in regions)
    return names


def design_matrix(
    terms: Sequence[str], rows: Mapping[str, np.ndarray], regions: Sequence[str] = REGIONS
) -> np.ndarray:
    """Build the design matrix for ``terms``.

    ``rows`` provides equal-length arrays ``region`` (codes), ``log_co2`` and
    ``log_gdp``; only the arrays a term needs are read.
    """
    region = np.asarray(rows["region"])
    n = len(region)
    cols: list[np.ndarray] = []
    for term in validate_terms(terms):
        if term == "intercept":
            cols.append(np.ones(n))
        elif term in ("log_co2", "log_gdp"):
            cols.append(np.asarray(rows[term], dtype=float))
        elif term == "region":
            cols.extend((region == r).astype(float) for r in regions[1:])
        else:
            x = np.asarray(rows[term.split(":")[0]], dtype=float)
            cols.extend(np.where(region == r, x, 0.0) for r in regions)
    return np.column_stack(cols) if cols else np.zeros((n, 0))


def single_row(
    terms: Sequence[str], region: str, log_co2: float = np.nan, log_gdp: float = np.nan,
    regions: Sequence[str] = REGIONS,
) -> np.ndarray:
    row = design_matrix(
        terms, {"region": np.array([region]), "log_co2": np.array([log_co2]), "log_gdp": np.array([log_gdp])}, regions
    )[0]
    if np.any(np.isnan(row)):
        raise ValueError(f"missing covariate for terms {terms}")
    return row


def spans(outer: np.ndarray, inner: np.ndarray, tol: float = 1e-8) -> bool:
    """True if every column of ``inner`` lies in the column space of ``outer``."""
    if inner.shape[1] == 0:
        return True
    coef, *_ = np.linalg.lstsq(outer, inner, rcond=None)
    resid = inner - outer @ coef
    scale = max(1.0, float(np.abs(inner).max()))
    return bool(np.abs(resid).max() <= tol * scale * max(1, inner.shape[0]) ** 0.5)
