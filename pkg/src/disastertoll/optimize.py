"""Damped Newton maximizer shared by the Poisson and GPD regressions."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConvergenceError


# relative change in an objective value that rounding can still resolve
_RESOLVABLE = 100 * np.finfo(float).eps


@dataclass
class OptimResult:
    x: np.ndarray
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    iterations: int
    trace: list = field(default_factory=list)
    stalled: bool = False

    @property
    def gradient_norm(self) -> float:
        return float(np.max(np.abs(self.gradient))) if self.gradient.size else 0.0


def newton_maximize(
    objective: Callable,
    x0,
    *,
    gtol: float = 1e-6,
    ftol: float = 1e-10,
    max_iter: int = 500,
    stall_window: int = 0,
    stall_gain: float = 1e-3,
) -> OptimResult:
    """Maximize ``objective`` with Levenberg-damped Newton steps and backtracking.

    ``objective(x, order)`` returns the value for ``order=0`` and
    ``(value, gradient, hessian)`` for ``order=2``. The value may be ``-inf``
    outside the parameter domain; the line search then backtracks. Stops when
    the max-norm of the gradient falls below ``gtol``, when a full Newton
    step changes the value by less than ``ftol`` relative, or when the
    predicted Newton gain is below what double precision resolves in the
    value (the gradient is then rounding noise).

    With ``stall_window > 0`` the search also stops, returning a result with
    ``stalled=True``, once the value has gained less than ``stall_gain`` per
    iteration over the last ``stall_window`` iterations. That is how a
    supremum on the edge of the domain shows up; the caller decides whether
    to accept it.
    """
    x = np.array(x0, dtype=float)
    f, g, H = objective(x, 2)
    if not np.isfinite(f):
        raise ConvergenceError("objective is not finite at the starting point")
    trace = [(0, f, float(np.max(np.abs(g))) if g.size else 0.0, 0.0)]
    p = len(x)
    eye = np.eye(p)
    for it in range(1, max_iter + 1):
        gnorm = float(np.max(np.abs(g))) if p else 0.0
        if gnorm < gtol:
            return OptimResult(x, f, g, H, it - 1, trace)
        neg = -H
        scale = max(1e-12, float(np.max(np.abs(np.diag(neg)))) if p else 1.0)
        mu = 0.0
        accepted = False
        while mu <= 1e12 * scale:
            try:
                L = np.linalg.cholesky(neg + mu * eye)
            except np.linalg.LinAlgError:
                mu = max(1e-8 * scale, 10 * mu)
                continue
            d = np.linalg.solve(L.T, np.linalg.solve(L, g))
            slope = float(g @ d)
            if mu == 0.0 and 0.5 * slope <= _RESOLVABLE * (1.0 + abs(f)) and gnorm < 1e3 * gtol:
                return OptimResult(x, f, g, H, it - 1, trace)
            t = 1.0
            while t > 1e-10:
                f_new = objective(x + t * d, 0)
                if np.isfinite(f_new) and f_new >= f + 1e-4 * t * slope:
                    accepted = True
                    break
                t *= 0.5
            if accepted:
                break
            mu = max(1e-8 * scale, 10 * mu)
        if not accepted:
            # no ascent direction improves f: at the numerical optimum if the gradient is small
            if gnorm < 1e3 * gtol:
                return OptimResult(x, f, g, H, it, trace)
            raise ConvergenceError(f"line search failed at iteration {it} (gradient {gnorm:.3g})", trace, x)
        x_new = x + t * d
        f_old = f
        f, g, H = objective(x_new, 2)
        x = x_new
        trace.append((it, f, float(np.max(np.abs(g))) if p else 0.0, t))
        if mu == 0.0 and t == 1.0 and abs(f - f_old) <= ftol * (1.0 + abs(f)):
            if float(np.max(np.abs(g))) < 1e3 * gtol:
                return OptimResult(x, f, g, H, it, trace)
        if stall_window and it >= stall_window and f - trace[-1 - stall_window][1] < stall_gain * stall_window:
            return OptimResult(x, f, g, H, it, trace, stalled=True)
    raise ConvergenceError(f"no convergence after {max_iter} iterations", trace, x)


def covariance_from_hessian(H: np.ndarray) -> np.ndarray:
    """Inverse observed information; raises on a singular information matrix."""
    info = -H
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError("observed information is singular") from exc
    if np.any(np.diag(cov) <= 0):
        raise ConvergenceError("observed information is not positive definite at the optimum")
    return cov
