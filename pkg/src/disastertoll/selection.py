"""Likelihood-ratio tests and the five-model selection ladder for the GPD regressions."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .data_model import AnnualPanel, SeveritySample
from .design import design_matrix, spans
from .errors import ConvergenceError, ConvergenceSuspectError, DataError, NotNestedError
from .frequency import FrequencyFit
from .regions import REGIONS
from .severity import SeverityFit, SeveritySpec, fit_severity

LADDER = {
    1: ("Constant", ("intercept",)),
    2: ("GDP", ("intercept", "log_gdp")),
    3: ("Regions", ("intercept", "region")),
    4: ("GDP by Regions", ("intercept", "log_gdp:region")),
    5: ("GDP by Regions+Regions", ("intercept", "region", "log_gdp:region")),
}
# (alternative, null) pairs tested
COMPARISONS = ((2, 1), (3, 1), (4, 2), (5, 3), (5, 4))

LOGLIK_SLACK = 1e-6


@dataclass(frozen=True)
class LrTestResult:
    null_loglik: float
    alt_loglik: float
    statistic: float
    df: int
    p_value: float


def lr_test_logliks(null_loglik: float, alt_loglik: float, df: int) -> LrTestResult:
    """LR test from two maximized log-likelihoods and the parameter-count difference."""
    if df < 0:
        raise NotNestedError("alternative has fewer parameters than the null")
    if alt_loglik < null_loglik - LOGLIK_SLACK:
        raise ConvergenceSuspectError(
            f"alternative log-likelihood {alt_loglik} is below the nested null {null_loglik}"
        )
    stat = max(0.0, 2.0 * (alt_loglik - null_loglik))
    p = 1.0 if df == 0 else float(stats.chi2.sf(stat, df))
    return LrTestResult(float(null_loglik), float(alt_loglik), stat, int(df), p)


def _probe_rows(regions: Sequence[str], seed: int = 12345) -> dict[str, np.ndarray]:
    # generic covariate values: column spans computed on them match the term algebra
    rng = np.random.default_rng(seed)
    reg = np.repeat(np.array(regions), 4)
    return {"region": reg, "log_co2": rng.normal(size=reg.size), "log_gdp": rng.normal(size=reg.size)}


def _nested(null_terms, alt_terms, regions) -> bool:
    rows = _probe_rows(regions)
    return spans(design_matrix(alt_terms, rows, regions), design_matrix(null_terms, rows, regions))


def lr_test(null_fit, alt_fit) -> LrTestResult:
    """Likelihood-ratio test of two nested fits of the same kind.

    Nesting is checked on the design column spans (per parameter block for
    severity fits); responses, windows and sample sizes must agree.
    """
    if type(null_fit) is not type(alt_fit):
        raise NotNestedError("fits are of different kinds")
    if null_fit.spec.response != alt_fit.spec.response or null_fit.spec.window != alt_fit.spec.window:
        raise NotNestedError("fits use different responses or windows")
    if null_fit.n_obs != alt_fit.n_obs:
        raise NotNestedError(f"fits use different samples ({null_fit.n_obs} vs {alt_fit.n_obs} observations)")
    regions = null_fit.regions
    if isinstance(null_fit, FrequencyFit):
        ok = _nested(null_fit.spec.terms, alt_fit.spec.terms, regions)
    else:
        ok = _nested(null_fit.spec.nu_terms, alt_fit.spec.nu_terms, regions)
        if null_fit.spec.xi_link == alt_fit.spec.xi_link:
            ok = ok and _nested(null_fit.spec.xi_terms, alt_fit.spec.xi_terms, regions)
        else:
            # links only coincide on the intercept-only tail index
            ok = ok and null_fit.spec.xi_terms == ("intercept",) == alt_fit.spec.xi_terms
    if not ok:
        raise NotNestedError(f"{null_fit.spec} is not nested in {alt_fit.spec}")
    return lr_test_logliks(null_fit.loglik, alt_fit.loglik, alt_fit.n_params - null_fit.n_params)


# ---------------------------------------------------------------------------
# ladder


@dataclass(frozen=True)
class LadderRow:
    number: int
    label: str
    terms: tuple[str, ...]
    loglik: float | None
    status: str  # "ok", "no cvg", "no data"
    p_values: Mapping[int, float] = field(default_factory=dict)
    sign_ok: bool = True
    supported: bool = False


@dataclass(frozen=True)
class LadderReport:
    response: str
    parameter: str  # "nu" or "xi"
    rows: tuple[LadderRow, ...]
    selected: int
    alpha: float
    override: bool = False
    fits: Mapping[int, SeverityFit] = field(default_factory=dict, compare=False, repr=False)

    @property
    def selected_fit(self) -> SeverityFit:
        return self.fits[self.selected]

    @property
    def selected_terms(self) -> tuple[str, ...]:
        return next(r.terms for r in self.rows if r.number == self.selected)

    def to_dict(self) -> dict:
        return {
            "response": self.response,
            "parameter": self.parameter,
            "alpha": self.alpha,
            "selected": self.selected,
            "override": self.override,
            "rows": [
                {
                    "model": r.number,
                    "label": r.label,
                    "terms": list(r.terms),
                    "loglik": r.loglik,
                    "status": r.status,
                    "p_values": {f"wrt ({k})": v for k, v in r.p_values.items()},
                    "sign_ok": r.sign_ok,
                    "supported": r.supported,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def render_text(self) -> str:
        lines = [f"LR ladder for {self.parameter} ({self.response})", ""]
        for r in self.rows:
            mark = "  <== selected" + (" (override)" if self.override else "") if r.number == self.selected else ""
            ll = f"{r.loglik:12.1f}" if r.loglik is not None else f"{r.status:>12}"
            sign = "" if r.sign_ok else "  [wrong-sign log(GDP) slope]"
            lines.append(f"({r.number}) {r.label:<24}{ll}{mark}{sign}")
            for k, p in r.p_values.items():
                ptxt = "(--)" if p is None else f"({p:.3f})"
                lines.append(f"    wrt ({k}) {LADDER[k][0]:<18}{ptxt:>10}")
        return "\n".join(lines) + "\n"


def _sign_ok(fit: SeverityFit, alpha: float) -> bool:
    """False if any log(GDP) slope is significantly positive at level ``alpha``."""
    z_crit = stats.norm.ppf(1 - alpha / 2)
    blocks = (
        (fit.nu_columns, fit.nu_coefficients, fit.nu_std_errors),
        (fit.xi_columns, fit.xi_coefficients, fit.xi_std_errors),
    )
    for cols, coef, se in blocks:
        for c, b, s in zip(cols, coef, se):
            if c.startswith("log_gdp") and b > 0 and b / s > z_crit:
                return False
    return True


def selection_ladder(
    sample: SeveritySample,
    panel: AnnualPanel,
    base_spec: SeveritySpec,
    parameter: str = "nu",
    *,
    alpha: float = 0.05,
    candidates: Mapping[int, tuple[str, ...]] | None = None,
    override: int | None = None,
    min_events_per_parameter: int = 10,
) -> LadderReport:
    """Fit the five candidate specifications for one GPD parameter and pick one.

    ``parameter="nu"`` varies the scale terms with the tail-index terms of
    ``base_spec`` held fixed; ``parameter="xi"`` varies the tail-index terms.
    A candidate is supported when it converged, has no significantly
    positive log(GDP) slope, and beats each of its ladder predecessors at
    level ``alpha``; the constant model is always supported. The supported
    candidate with the highest log-likelihood is selected unless
    ``override`` names a model.
    """
    if parameter not in ("nu", "xi"):
        raise ValueError("parameter must be 'nu' or 'xi'")
    specs = {k: v[1] for k, v in LADDER.items()}
    if candidates:
        specs.update(candidates)
    fits: dict[int, SeverityFit] = {}
    status: dict[int, str] = {}
    for k, terms in specs.items():
        spec = replace(base_spec, **{f"{parameter}_terms": terms})
        try:
            fits[k] = fit_severity(sample, panel, spec, min_events_per_parameter=min_events_per_parameter)
            status[k] = "ok"
        except ConvergenceError:
            status[k] = "no cvg"
        except DataError:
            status[k] = "no data"
    p_values: dict[int, dict[int, float | None]] = {k: {} for k in specs}
    for alt, null in COMPARISONS:
        if alt in fits and null in fits:
            try:
                p_values[alt][null] = lr_test(fits[null], fits[alt]).p_value
            except ConvergenceSuspectError:
                # a nested fit ended below its null: treat the larger fit as unconverged
                status[alt] = "no cvg"
                fits.pop(alt)
                p_values[alt][null] = None
        else:
            p_values[alt][null] = None
    rows = []
    for k, terms in specs.items():
        fit = fits.get(k)
        sign = _sign_ok(fit, alpha) if fit is not None else True
        preds = [p for p in p_values[k].values()]
        supported = fit is not None and (
            k == 1 or (sign and all(p is not None and p < alpha for p in preds) and len(preds) > 0)
        )
        rows.append(LadderRow(k, LADDER.get(k, (f"model {k}",))[0], terms, fit.loglik if fit else None,
                              status[k], p_values[k], sign, supported))
    if override is not None:
        if override not in fits:
            raise ConvergenceError(f"override model ({override}) did not converge")
        chosen = override
    else:
        pool = [r for r in rows if r.supported]
        if not pool:
            raise ConvergenceError(f"{base_spec.response}: no ladder candidate converged")
        chosen = max(pool, key=lambda r: r.loglik).number
    return LadderReport(base_spec.response, parameter, tuple(rows), chosen, alpha, override is not None, fits)


def select_severity_spec(
    sample: SeveritySample,
    panel: AnnualPanel,
    response: str,
    *,
    xi_link: str = "identity",
    window=(1960, 2019),
    alpha: float = 0.05,
    nu_override: int | None = None,
    xi_override: int | None = None,
    min_events_per_parameter: int = 10,
) -> tuple[LadderReport, LadderReport]:
    """Run the scale ladder (constant tail index), then the tail ladder at the chosen scale."""
    base = SeveritySpec(response, ("intercept",), ("intercept",), xi_link, window)
    nu_report = selection_ladder(sample, panel, base, "nu", alpha=alpha, override=nu_override,
                                 min_events_per_parameter=min_events_per_parameter)
    base = replace(base, nu_terms=nu_report.selected_terms)
    xi_report = selection_ladder(sample, panel, base, "xi", alpha=alpha, override=xi_override,
                                 min_events_per_parameter=min_events_per_parameter)
    return nu_report, xi_report
