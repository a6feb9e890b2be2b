"""Generalized Pareto and Poisson kernels.

The GPD is used with threshold zero, in the usual ``(beta, xi)`` form and in
the orthogonal form ``nu = log((1 + xi) * beta)`` which decouples the
scale and the tail index in the Fisher information.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DomainError

# below this |xi| the exponential-limit series branch is used
XI_SWITCH = 1e-8


class _InfiniteMean:
    """Tag returned instead of a float when the GPD mean does not exist."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE_MEAN"

    def __bool__(self):
        return False

    def __reduce__(self):
        return (_InfiniteMean, ())


INFINITE_MEAN = _InfiniteMean()


@dataclass(frozen=True)
class GpdParams:
    xi: float
    beta: float

    def __post_init__(self):
        if not self.xi > -1:
            raise DomainError(f"tail index must exceed -1, got {self.xi}")
        if not self.beta > 0:
            raise DomainError(f"scale must be positive, got {self.beta}")

    @property
    def upper_endpoint(self) -> float:
        return -self.beta / self.xi if self.xi < 0 else math.inf

    def to_ortho(self) -> "GpdOrthoParams":
        return GpdOrthoParams(nu=math.log1p(self.xi) + math.log(self.beta), xi=self.xi)


@dataclass(frozen=True)
class GpdOrthoParams:
    nu: float
    xi: float

    def to_standard(self) -> GpdParams:
        if not self.xi > -1:
            raise DomainError(f"tail index must exceed -1, got {self.xi}")
        return GpdParams(xi=self.xi, beta=math.exp(self.nu - math.log1p(self.xi)))


@dataclass(frozen=True)
class PoissonParams:
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError(f"Poisson intensity must be positive, got {self.lam}")


# ---------------------------------------------------------------------------
# GPD


def _check_support(params: GpdParams, y: np.ndarray) -> None:
    if np.any(y < 0) or np.any(np.isnan(y)):
        raise DomainError("GPD support starts at 0")
    if params.xi < 0 and np.any(y > params.upper_endpoint * (1 + 1e-12)):
        raise DomainError(f"y beyond the upper endpoint {params.upper_endpoint}")


def _cum_hazard(xi: float, x: np.ndarray) -> np.ndarray:
    """-log survival at standardized excess ``x = y / beta``."""
    if abs(xi) < XI_SWITCH:
        return x - 0.5 * xi * x * x
    return np.log1p(xi * x) / xi


def gpd_cdf(params: GpdParams, y):
    y_arr = np.asarray(y, dtype=float)
    _check_support(params, y_arr)
    x = y_arr / params.beta
    if params.xi < 0:
        x = np.minimum(x, -1.0 / params.xi)
    with np.errstate(divide="ignore"):
        h = _cum_hazard(params.xi, x)
    out = -np.expm1(-h)
    return float(out) if np.ndim(out) == 0 else out


def gpd_sf(params: GpdParams, y):
    return 1.0 - np.asarray(gpd_cdf(params, y))


def gpd_quantile(params: GpdParams, p):
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr < 0) or np.any(p_arr >= 1) or np.any(np.isnan(p_arr)):
        raise DomainError("probability must lie in [0, 1)")
    L = -np.log1p(-p_arr)
    xi = params.xi
    if abs(xi) < XI_SWITCH:
        q = params.beta * (L + 0.5 * xi * L * L)
    else:
        q = params.beta * np.expm1(xi * L) / xi
    return float(q) if np.ndim(q) == 0 else q


def gpd_quantile_array(xi, beta, p) -> np.ndarray:
    """Elementwise quantile for arrays of parameters (no validation; used by simulators)."""
    xi, beta, p = np.broadcast_arrays(np.asarray(xi, float), np.asarray(beta, float), np.asarray(p, float))
    L = -np.log1p(-p)
    small = np.abs(xi) < XI_SWITCH
    xi_safe = np.where(small, 1.0, xi)
    return beta * np.where(small, L + 0.5 * xi * L * L, np.expm1(xi_safe * L) / xi_safe)


def gpd_median(params: GpdParams) -> float:
    return gpd_quantile(params, 0.5)


def gpd_mean(params: GpdParams):
    """``beta / (1 - xi)``, or :data:`INFINITE_MEAN` when ``xi >= 1``."""
    if params.xi >= 1:
        return INFINITE_MEAN
    return params.beta / (1.0 - params.xi)


def gpd_logpdf(params: GpdParams, y):
    y_arr = np.asarray(y, dtype=float)
    ll = gpd_terms(np.full(y_arr.shape, params.to_ortho().nu), np.full(y_arr.shape, params.xi), y_arr)[0]
    return float(ll) if np.ndim(ll) == 0 else ll


def gpd_terms(nu, xi, y, order: int = 0):
    """Per-observation GPD log-density and derivatives in ``(nu, xi)``.

    Returns ``(ll,)`` for ``order=0``, ``(ll, d_nu, d_xi)`` for ``order=1``
    and adds ``(d_nu_nu, d_nu_xi, d_xi_xi)`` for ``order=2``. Points outside
    the support (or ``xi <= -1``) get ``ll = -inf`` and zero derivatives.

    With ``s = 1 + xi``, ``c = y exp(-nu)`` and ``z = xi s c``::

        ll = -nu + log(s) - (1 + 1/xi) log1p(z)
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _gpd_terms(nu, xi, y, order)


def _gpd_terms(nu, xi, y, order):
    nu = np.asarray(nu, dtype=float)
    xi = np.asarray(xi, dtype=float)
    y = np.asarray(y, dtype=float)
    nu, xi, y = np.broadcast_arrays(nu, xi, y)
    s = 1.0 + xi
    c = y * np.exp(-nu)
    z = xi * s * c
    ok = (s > 0) & (1.0 + z > 0) & (y >= 0)
    small = np.abs(xi) < XI_SWITCH
    xi_safe = np.where(small | ~ok, 1.0, xi)
    z_safe = np.where(ok, z, 0.0)
    s_safe = np.where(ok, s, 1.0)
    lz = np.log1p(z_safe)
    # phi = (1 + 1/xi) log1p(z); series in xi near zero
    phi = np.where(small, c + xi * (2 * c - 0.5 * c * c), lz / xi_safe + lz)
    ll = np.where(ok, -nu + np.log(s_safe) - phi, -np.inf)
    if order == 0:
        return (ll,)
    w = s_safe * c
    opz = 1.0 + z_safe
    # q = w / (1 + z) stays bounded when w itself is astronomically large
    q = w / opz
    g_nu = np.where(ok, -1.0 + s_safe * q, 0.0)
    g_xi_exact = 1.0 / s_safe + lz / xi_safe**2 - (1 + 2 * xi) * q / xi_safe
    g_xi_series = 1.0 / s_safe - (2 * c - 0.5 * c * c) - 2 * xi * (c - 1.5 * c * c + c**3 / 3.0)
    g_xi = np.where(ok, np.where(small, g_xi_series, g_xi_exact), 0.0)
    if order == 1:
        return ll, g_nu, g_xi
    h_nunu = np.where(ok, -s_safe * q / opz, 0.0)
    h_nuxi = np.where(ok, q * (2.0 / opz - q), 0.0)
    # d2/dxi2 by central difference of the analytic d/dxi
    step = 1e-5 * np.maximum(1.0, np.abs(xi))
    gp = _gpd_terms(nu, xi + step, y, 1)[2]
    gm = _gpd_terms(nu, xi - step, y, 1)[2]
    h_xixi = np.where(ok, (gp - gm) / (2 * step), 0.0)
    return ll, g_nu, g_xi, h_nunu, h_nuxi, h_xixi


def gpd_loglik(params: GpdOrthoParams, sample) -> float:
    """Summed log-density; ``-inf`` if any point leaves the support or ``xi <= -1``."""
    y = np.asarray(sample, dtype=float)
    if y.size == 0:
        raise DomainError("sample must be non-empty")
    if not params.xi > -1:
        return -math.inf
    return float(np.sum(gpd_terms(params.nu, params.xi, y)[0]))


def gpd_loglik_grad(params: GpdOrthoParams, sample) -> np.ndarray:
    """Gradient of :func:`gpd_loglik` with respect to ``(nu, xi)``."""
    y = np.asarray(sample, dtype=float)
    _, g_nu, g_xi = gpd_terms(params.nu, params.xi, y, order=1)
    return np.array([g_nu.sum(), g_xi.sum()])


def gpd_sample(params: GpdParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` inverse-transform draws."""
    if n < 0:
        raise DomainError("n must be non-negative")
    u = rng.random(n)
    return np.asarray(gpd_quantile(params, u), dtype=float).reshape(n)


def gpd_pwm(sample) -> GpdParams:
    """Probability-weighted-moment estimate (Hosking & Wallis), threshold zero.

    Only meaningful for ``xi < 1``; used as an optimizer starting point.
    """
    y = np.sort(np.asarray(sample, dtype=float))
    n = len(y)
    a0 = y.mean()
    p = (np.arange(1, n + 1) - 0.35) / n
    a1 = np.mean((1 - p) * y)
    denom = a0 - 2 * a1
    if denom <= 0:
        return GpdParams(xi=0.9, beta=max(a0 * 0.1, 1e-8))
    xi = 2.0 - a0 / denom
    beta = 2.0 * a0 * a1 / denom
    xi = float(np.clip(xi, -0.45, 0.95))
    return GpdParams(xi=xi, beta=max(float(beta), 1e-8))


# ---------------------------------------------------------------------------
# Poisson


def poisson_pmf(params: PoissonParams, n):
    n_arr = np.asarray(n)
    if np.any(n_arr < 0):
        raise DomainError("count must be non-negative")
    out = np.exp(n_arr * math.log(params.lam) - params.lam - gammaln(n_arr + 1.0))
    return float(out) if np.ndim(out) == 0 else out


def poisson_sample(params: PoissonParams, rng: np.random.Generator, size=None):
    return rng.poisson(params.lam, size=size)
