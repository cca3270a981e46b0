"""Maximum-likelihood fitting, confidence intervals, and bias experiments.

Fits are run in unconstrained coordinates (log doubling time, log median,
log of the median-to-95% spread, log travel-mix) with a derivative-free
simplex search, then reported on the interpretable scale.  Confidence
intervals come from profile likelihood (inverting the chi-square(1) likelihood
ratio) or from a case-resampling bootstrap.  The module also packages the two
demonstration experiments: the naive-versus-adjusted growth sweep over
confirmation cutoffs and a chi-square goodness-of-fit of the onset-day
histogram against the exported-resident onset density.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import chi2

from .likelihood import (
    DisplayTheta,
    L_DEFAULT,
    LikelihoodError,
    ParamTheta,
    case_arrays,
    cond_log_terms,
    marginal_s_density,
    quantiles_to_shape_rate,
    trunc_log_terms,
    uncond_log_terms,
)
from .timeline import CaseRecord

__all__ = [
    "FitOptions",
    "FitResult",
    "CIResult",
    "SweepRow",
    "GofResult",
    "DEFAULT_INIT",
    "mle_fit",
    "profile_ci",
    "bootstrap_ci",
    "bias_sweep",
    "gof_onset_marginal",
    "onset_fit_table",
]

_BIG = 1e15
_LOG_FLOOR = math.log(1e-300)
_LN2 = math.log(2.0)

#: Interior, plausible starting point used when no init is given.
DEFAULT_INIT = DisplayTheta(doubling_time=4.0, median_incubation=5.0,
                            q95_incubation=12.0, rho=0.5)

_KINDS = ("cond", "uncond", "cond_trunc")
_FIXABLE = ("rho", "r", "doubling_time", "median_incubation", "q95_incubation")


@dataclass(frozen=True)
class FitOptions:
    """Knobs of the simplex search."""

    max_eval: int = 50_000
    restarts: int = 3
    jitter: float = 0.2
    seed: int = 0
    xatol: float = 1e-8
    fatol: float = 1e-10
    boundary: float = 16.0  # |transformed coordinate| beyond this flags a boundary


@dataclass(frozen=True)
class CIResult:
    """A two-sided interval; a False bracket flag marks a one-sided failure."""

    lo: float
    hi: float
    level: float = 0.95
    lower_bracketed: bool = True
    upper_bracketed: bool = True

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "level": self.level,
                "lower_bracketed": self.lower_bracketed,
                "upper_bracketed": self.upper_bracketed}


@dataclass
class FitResult:
    """A maximum-likelihood fit with its diagnostics."""

    theta: ParamTheta
    display: DisplayTheta
    log_lik: float
    kind: str
    n_cases: int
    M: float | None = None
    fixed: dict = field(default_factory=dict)
    converged: bool = True
    n_clamped: int = 0
    n_eval: int = 0
    message: str = ""
    ci: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "theta": {"rho": self.theta.rho, "r": self.theta.r,
                      "alpha": self.theta.alpha, "beta": self.theta.beta},
            "display": {"doubling_time": self.display.doubling_time,
                        "median_incubation": self.display.median_incubation,
                        "q95_incubation": self.display.q95_incubation,
                        "rho": self.display.rho},
            "log_lik": self.log_lik,
            "kind": self.kind,
            "n_cases": self.n_cases,
            "M": self.M,
            "fixed": dict(self.fixed),
            "converged": self.converged,
            "n_clamped": self.n_clamped,
            "n_eval": self.n_eval,
            "message": self.message,
            "ci": {k: v.to_dict() for k, v in self.ci.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Transform between display parameters and unconstrained coordinates
# ---------------------------------------------------------------------------

def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


class _ParamMap:
    """Active-coordinate bookkeeping given the likelihood kind and pinned values."""

    def __init__(self, kind: str, fixed: dict | None, L: float = L_DEFAULT):
        fixed = dict(fixed or {})
        unknown = set(fixed) - set(_FIXABLE)
        if unknown:
            raise ValueError(f"cannot fix {sorted(unknown)}; allowed: {_FIXABLE}")
        if "r" in fixed and "doubling_time" in fixed:
            raise ValueError("fix either r or doubling_time, not both")
        if kind != "uncond" and "rho" in fixed:
            raise ValueError("rho only applies to the unconditional likelihood")
        self.kind = kind
        self.fixed = fixed
        self.L = L
        if "r" in fixed:
            self.r_pinned: float | None = float(fixed["r"])
        elif "doubling_time" in fixed:
            self.r_pinned = _LN2 / float(fixed["doubling_time"])
        else:
            self.r_pinned = None
        if kind == "uncond" and self.r_pinned is not None and not self.r_pinned > 0:
            raise ValueError("unconditional likelihood needs r > 0")
        self.med_pinned = fixed.get("median_incubation")
        self.q95_pinned = fixed.get("q95_incubation")
        if self.med_pinned is not None and self.q95_pinned is not None \
                and not 0 < self.med_pinned < self.q95_pinned:
            raise ValueError("pinned incubation quantiles must satisfy 0 < median < q95")
        self.rho_pinned = fixed.get("rho") if kind == "uncond" else None
        self.has_rho = kind == "uncond"

        names: list[str] = []
        if self.r_pinned is None:
            names.append("log_doubling")
        if self.med_pinned is None and self.q95_pinned is None:
            names += ["log_median", "log_spread"]
        elif self.med_pinned is None:  # q95 pinned
            names.append("logit_median_frac")
        elif self.q95_pinned is None:  # median pinned
            names.append("log_spread")
        if self.has_rho and self.rho_pinned is None:
            names.append("log_rho")
        self.names = names

    def pack(self, d: DisplayTheta) -> np.ndarray:
        u = []
        for name in self.names:
            if name == "log_doubling":
                u.append(math.log(d.doubling_time))
            elif name == "log_median":
                u.append(math.log(d.median_incubation))
            elif name == "log_spread":
                med = self.med_pinned if self.med_pinned is not None else d.median_incubation
                u.append(math.log(max(d.q95_incubation - med, 1e-9)))
            elif name == "logit_median_frac":
                frac = min(max(d.median_incubation / self.q95_pinned, 1e-12), 1 - 1e-12)
                u.append(math.log(frac / (1.0 - frac)))
            elif name == "log_rho":
                rho = d.rho if d.rho is not None else DEFAULT_INIT.rho
                u.append(math.log(max(rho, 1e-9)))
        return np.asarray(u, dtype=float)

    def unpack(self, u: np.ndarray) -> tuple[float | None, float, float, float]:
        """-> (rho, r, median, q95); raises Over/ValueError off the valid domain."""
        vals = dict(zip(self.names, u))
        if self.r_pinned is not None:
            r = self.r_pinned
        else:
            r = _LN2 / math.exp(vals["log_doubling"])
        if self.med_pinned is not None and self.q95_pinned is not None:
            med, q95 = self.med_pinned, self.q95_pinned
        elif self.med_pinned is not None:
            med = self.med_pinned
            q95 = med + math.exp(vals["log_spread"])
        elif self.q95_pinned is not None:
            q95 = self.q95_pinned
            med = q95 * _sigmoid(vals["logit_median_frac"])
        else:
            med = math.exp(vals["log_median"])
            q95 = med + math.exp(vals["log_spread"])
        if self.has_rho:
            rho = self.rho_pinned if self.rho_pinned is not None else math.exp(vals["log_rho"])
        else:
            rho = None
        return rho, r, med, q95


def _make_objective(arrays, kind: str, M: float | None, pmap: _ParamMap, L: float):
    b, e, s, resident = arrays

    def fun(u: np.ndarray) -> float:
        try:
            rho, r, med, q95 = pmap.unpack(u)
            alpha, beta = quantiles_to_shape_rate(med, q95)
            if kind == "cond":
                if r < 0:
                    return _BIG
                lt = cond_log_terms(b, e, s, r, alpha, beta)
            elif kind == "uncond":
                if not r > 0:
                    return _BIG
                lt = uncond_log_terms(b, e, s, resident, rho, r, alpha, beta, L)
            else:
                if r < 0:
                    return _BIG
                lt = trunc_log_terms(b, e, s, r, alpha, beta, M)
        except (ValueError, OverflowError):
            return _BIG
        lt = np.where(np.isnan(lt), -np.inf, lt)
        total = float(np.maximum(lt, _LOG_FLOOR).sum())
        return -total

    return fun


def _count_clamped(arrays, kind, M, L, rho, r, alpha, beta) -> int:
    b, e, s, resident = arrays
    if kind == "cond":
        lt = cond_log_terms(b, e, s, r, alpha, beta)
    elif kind == "uncond":
        lt = uncond_log_terms(b, e, s, resident, rho, r, alpha, beta, L)
    else:
        lt = trunc_log_terms(b, e, s, r, alpha, beta, M)
    lt = np.where(np.isnan(lt), -np.inf, lt)
    return int((lt < _LOG_FLOOR).sum())


# ---------------------------------------------------------------------------
# Maximum likelihood
# ---------------------------------------------------------------------------

def mle_fit(cases: Sequence[CaseRecord], kind: str = "cond",
            init: DisplayTheta | None = None, M: float | None = None,
            fixed: dict | None = None, options: FitOptions | None = None,
            L: float = L_DEFAULT) -> FitResult:
    """Maximize the chosen log-likelihood over the free display parameters.

    Parameters
    ----------
    cases : sequence of CaseRecord
        The cohort; must be nonempty.
    kind : {"cond", "uncond", "cond_trunc"}
        Which likelihood: conditional on (B, E), joint with the travel mix,
        or right-truncated at S <= M (requires M).
    init : DisplayTheta, optional
        Starting point; defaults to doubling 4 d, median 5 d, q95 12 d,
        rho 0.5.
    fixed : dict, optional
        Pin parameters by display name ("rho", "doubling_time",
        "median_incubation", "q95_incubation") or pin the rate directly
        ("r", e.g. {"r": 0.0} for the no-growth fit).

    Returns
    -------
    FitResult
        converged is False when the search failed or stopped against the
        boundary of the transformed domain; n_clamped counts cases whose
        likelihood term underflowed at the optimum (should be 0).
    """
    if kind not in _KINDS:
        raise ValueError(f"kind must be one of {_KINDS}, got {kind!r}")
    if not cases:
        raise ValueError("no cases to fit")
    if kind == "cond_trunc":
        if M is None:
            raise ValueError("cond_trunc requires the truncation day M")
        late = [c for c in cases if c.S > M]
        if late:
            raise LikelihoodError(
                f"truncated likelihood: case {late[0].case_id} has S={late[0].S} > M={M}")
    options = options or FitOptions()
    arrays = case_arrays(cases)
    pmap = _ParamMap(kind, fixed, L)
    init = init or DEFAULT_INIT
    u0 = pmap.pack(init)
    fun = _make_objective(arrays, kind, M, pmap, L)

    if u0.size == 0:  # everything pinned: nothing to optimize
        val = fun(u0)
        best_x, best_fun, n_eval, success = u0, val, 1, True
    else:
        rng = np.random.default_rng(options.seed)
        per_run = max(options.max_eval // (options.restarts + 1), 200)
        best_x, best_fun, n_eval, success = None, np.inf, 0, False
        for k in range(options.restarts + 1):
            x0 = u0 if k == 0 else u0 + options.jitter * rng.standard_normal(u0.size)
            res = minimize(fun, x0, method="Nelder-Mead",
                           options={"xatol": options.xatol, "fatol": options.fatol,
                                    "maxfev": per_run, "maxiter": per_run,
                                    "adaptive": u0.size > 2})
            n_eval += res.nfev
            if res.fun < best_fun:
                best_x, best_fun, success = res.x, res.fun, bool(res.success)

    rho, r, med, q95 = pmap.unpack(np.asarray(best_x))
    alpha, beta = quantiles_to_shape_rate(med, q95)
    theta = ParamTheta(r=r, alpha=alpha, beta=beta, rho=rho)
    display = DisplayTheta(doubling_time=math.inf if r == 0 else _LN2 / r,
                           median_incubation=med, q95_incubation=q95, rho=rho)
    at_boundary = bool(np.any(np.abs(np.asarray(best_x)) > options.boundary))
    n_clamped = int(_count_clamped(arrays, kind, M, L, rho, r, alpha, beta))
    converged = bool(success and not at_boundary and best_fun < _BIG)
    message = "ok" if converged else ("boundary" if at_boundary else "search failed")
    return FitResult(theta=theta, display=display, log_lik=float(-best_fun),
                     kind=kind, n_cases=len(cases), M=M, fixed=dict(fixed or {}),
                     converged=converged, n_clamped=n_clamped, n_eval=int(n_eval),
                     message=message)


# ---------------------------------------------------------------------------
# Profile-likelihood confidence intervals
# ---------------------------------------------------------------------------

_PROFILE_TOL = 5e-4          # |2 (lhat - lprof) - c| at returned endpoints
_PROFILE_RANGE = 100.0       # search within [point/100, point*100]
_PROFILE_STEP = 1.35


def _warm_init(display: DisplayTheta, param: str, value: float) -> DisplayTheta:
    """Shift the fitted display point so pinning param=value stays valid."""
    if param == "median_incubation":
        spread = display.q95_incubation - display.median_incubation
        return replace(display, median_incubation=value, q95_incubation=value + spread)
    if param == "q95_incubation":
        frac = display.median_incubation / display.q95_incubation
        return replace(display, q95_incubation=value, median_incubation=frac * value)
    return replace(display, **{param: value})


def profile_ci(cases: Sequence[CaseRecord], kind: str, fit: FitResult, param: str,
               level: float = 0.95, M: float | None = None,
               options: FitOptions | None = None, L: float = L_DEFAULT) -> CIResult:
    """Invert the likelihood-ratio test for one display parameter.

    Endpoints v solve 2(l_hat - l_profile(v)) = chi2_1(level) to within 5e-4;
    the search stays within [point/100, point*100] and a side that never
    crosses inside that range comes back with its bracket flag False.
    """
    allowed = ["doubling_time", "median_incubation", "q95_incubation"] + (
        ["rho"] if kind == "uncond" else [])
    if param not in allowed:
        raise ValueError(f"param must be one of {allowed}, got {param!r}")
    if param in fit.fixed:
        raise ValueError(f"{param} was pinned in the base fit")
    if M is None:
        M = fit.M
    options = options or FitOptions()
    inner = FitOptions(max_eval=20_000, restarts=0, seed=options.seed,
                       xatol=options.xatol, fatol=options.fatol,
                       boundary=options.boundary)
    point = getattr(fit.display, param)
    threshold = chi2.ppf(level, 1)
    if threshold == 0.0:
        return CIResult(point, point, level)

    def discrepancy(v: float) -> float:
        sub = mle_fit(cases, kind, init=_warm_init(fit.display, param, v), M=M,
                      fixed={**fit.fixed, param: v}, options=inner, L=L)
        return 2.0 * (fit.log_lik - sub.log_lik) - threshold

    def solve(direction: int) -> tuple[float, bool]:
        v_in = point
        v_out = None
        v = point
        limit = point * _PROFILE_RANGE if direction > 0 else point / _PROFILE_RANGE
        while True:
            v = v * _PROFILE_STEP if direction > 0 else v / _PROFILE_STEP
            hit_limit = v >= limit if direction > 0 else v <= limit
            if hit_limit:
                v = limit
            d = discrepancy(v)
            if d > 0:
                v_out = v
                break
            v_in = v
            if hit_limit:
                return limit, False
        lo, hi = (v_in, v_out) if direction > 0 else (v_out, v_in)
        # bisect in log space on the sign change
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            d = discrepancy(mid)
            if abs(d) <= _PROFILE_TOL:
                return mid, True
            if (d > 0) == (direction > 0):
                hi = mid
            else:
                lo = mid
        return math.sqrt(lo * hi), True

    hi_end, hi_ok = solve(+1)
    lo_end, lo_ok = solve(-1)
    ci = CIResult(lo=lo_end, hi=hi_end, level=level,
                  lower_bracketed=lo_ok, upper_bracketed=hi_ok)
    fit.ci[param] = ci
    return ci


# ---------------------------------------------------------------------------
# Bootstrap
# ---------------------------------------------------------------------------

def _refit_on(cases, idx, kind, M, fixed, init, options, L) -> FitResult:
    sub = [cases[i] for i in idx]
    return mle_fit(sub, kind, init=init, M=M, fixed=fixed, options=options, L=L)


def _bootstrap_displays(cases, kind, M, fixed, full: FitResult, n_boot, rng,
                        options, L, n_jobs) -> tuple[list[DisplayTheta], int]:
    n = len(cases)
    inner = FitOptions(max_eval=20_000, restarts=0, seed=options.seed,
                       xatol=options.xatol, fatol=options.fatol,
                       boundary=options.boundary)
    all_idx = rng.integers(0, n, size=(n_boot, n))
    args = [(cases, idx, kind, M, fixed, full.display, inner, L) for idx in all_idx]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            fits = list(pool.map(_refit_star, args, chunksize=max(1, n_boot // (4 * n_jobs))))
    else:
        fits = [_refit_star(a) for a in args]
    displays = [f.display for f in fits if f.converged]
    failures = n_boot - len(displays)
    return displays, failures


def _refit_star(args):
    try:
        return _refit_on(*args)
    except (ValueError, LikelihoodError):
        dummy = FitResult(theta=ParamTheta(r=0.0, alpha=1.0, beta=1.0),
                          display=DisplayTheta(1.0, 1.0, 2.0), log_lik=-np.inf,
                          kind="cond", n_cases=0, converged=False)
        return dummy


def bootstrap_ci(cases: Sequence[CaseRecord], kind: str,
                 statistic: Callable[[FitResult], float] | str,
                 n_boot: int = 1000, level: float = 0.95,
                 rng: np.random.Generator | None = None, M: float | None = None,
                 fixed: dict | None = None, method: str = "basic",
                 options: FitOptions | None = None, L: float = L_DEFAULT,
                 n_jobs: int = 1, max_failure_rate: float = 0.05) -> CIResult:
    """Case-resampling bootstrap interval for a scalar statistic of the fit.

    statistic may be a display-field name ("doubling_time", ...) or any
    callable FitResult -> float.  method "basic" reflects the percentile
    interval around the full-data statistic (2*s_hat - percentiles); method
    "percentile" uses the raw percentiles.  More than max_failure_rate
    non-converged refits aborts with RuntimeError.
    """
    if method not in ("basic", "percentile"):
        raise ValueError(f"method must be 'basic' or 'percentile', got {method!r}")
    rng = rng if rng is not None else np.random.default_rng(0)
    options = options or FitOptions()
    if isinstance(statistic, str):
        name = statistic
        statistic = lambda f: getattr(f.display, name)  # noqa: E731
    full = mle_fit(cases, kind, M=M, fixed=fixed, options=options, L=L)
    s_hat = float(statistic(full))
    displays, failures = _bootstrap_displays(cases, kind, M, fixed, full, n_boot,
                                             rng, options, L, n_jobs)
    if failures > max_failure_rate * n_boot:
        raise RuntimeError(f"bootstrap: {failures}/{n_boot} refits failed to converge")
    stats = np.array([statistic(FitResult(
        theta=d.theta(), display=d, log_lik=np.nan, kind=kind, n_cases=len(cases)))
        for d in displays])
    a = 100.0 * (1.0 - level) / 2.0
    lo_p, hi_p = np.percentile(stats, [a, 100.0 - a])
    if method == "basic":
        return CIResult(lo=2 * s_hat - float(hi_p), hi=2 * s_hat - float(lo_p), level=level)
    return CIResult(lo=float(lo_p), hi=float(hi_p), level=level)


# ---------------------------------------------------------------------------
# Naive-versus-adjusted sweep over confirmation cutoffs
# ---------------------------------------------------------------------------

_SWEEP_MODELS = ("r0", "growth", "growth_trunc")


@dataclass(frozen=True)
class SweepRow:
    """One (cutoff day, model) cell of the bias sweep."""

    cutoff: int
    model: str
    n_cases: int
    fitted: bool
    median: float | None = None
    q95: float | None = None
    median_ci: CIResult | None = None
    q95_ci: CIResult | None = None

    def to_dict(self) -> dict:
        return {"cutoff": self.cutoff, "model": self.model, "n_cases": self.n_cases,
                "fitted": self.fitted, "median": self.median, "q95": self.q95,
                "median_ci": self.median_ci.to_dict() if self.median_ci else None,
                "q95_ci": self.q95_ci.to_dict() if self.q95_ci else None}


def bias_sweep(cases: Sequence[CaseRecord], cutoffs: Sequence[int],
               m_offset: int = 7, min_cases: int = 20, bootstrap_b: int = 0,
               level: float = 0.95, rng: np.random.Generator | None = None,
               options: FitOptions | None = None, L: float = L_DEFAULT,
               n_jobs: int = 1) -> list[SweepRow]:
    """Incubation-quantile estimates by confirmation cutoff under three models.

    For each cutoff day d (cases confirmed by d):
    "r0"           no-growth fit (infection uniform over the stay);
    "growth"       growth-weighted fit, ignoring that late onsets are unseen;
    "growth_trunc" growth-weighted fit right-truncated at M = d - m_offset,
                   fitted on the cases with S <= M.
    Cells with fewer than min_cases cases are reported unfitted.  With
    bootstrap_b > 0, percentile bootstrap bands are attached.
    """
    if any(c.confirmed_int is None for c in cases):
        raise ValueError("bias_sweep needs confirmed_int on every case")
    options = options or FitOptions()
    rng = rng if rng is not None else np.random.default_rng(options.seed)
    rows: list[SweepRow] = []
    for d in cutoffs:
        by_d = [c for c in cases if c.confirmed_int <= d]
        for model in _SWEEP_MODELS:
            if model == "growth_trunc":
                M = float(d - m_offset)
                sub, kind, fixed = [c for c in by_d if c.S <= M], "cond_trunc", None
            elif model == "r0":
                M, sub, kind, fixed = None, by_d, "cond", {"r": 0.0}
            else:
                M, sub, kind, fixed = None, by_d, "cond", None
            if len(sub) < min_cases:
                rows.append(SweepRow(cutoff=int(d), model=model, n_cases=len(sub),
                                     fitted=False))
                continue
            fit = mle_fit(sub, kind, M=M, fixed=fixed, options=options, L=L)
            med_ci = q95_ci = None
            if bootstrap_b > 0:
                displays, failures = _bootstrap_displays(
                    sub, kind, M, fixed, fit, bootstrap_b, rng, options, L, n_jobs)
                if failures <= 0.05 * bootstrap_b and displays:
                    a = 100.0 * (1.0 - level) / 2.0
                    meds = np.array([x.median_incubation for x in displays])
                    q95s = np.array([x.q95_incubation for x in displays])
                    med_ci = CIResult(*map(float, np.percentile(meds, [a, 100 - a])), level)
                    q95_ci = CIResult(*map(float, np.percentile(q95s, [a, 100 - a])), level)
            rows.append(SweepRow(cutoff=int(d), model=model, n_cases=len(sub),
                                 fitted=True, median=fit.display.median_incubation,
                                 q95=fit.display.q95_incubation,
                                 median_ci=med_ci, q95_ci=q95_ci))
    return rows


# ---------------------------------------------------------------------------
# Goodness of fit of the onset-day histogram
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GofResult:
    statistic: float
    dof: int
    p_value: float
    n_cases: int
    n_bins: int

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "dof": self.dof,
                "p_value": self.p_value, "n_cases": self.n_cases,
                "n_bins": self.n_bins}


def onset_fit_table(cases: Sequence[CaseRecord], r: float, alpha: float,
                    beta: float, L: float = L_DEFAULT):
    """(day, observed, expected) per onset day among resident cases.

    Expected counts evaluate the exported-resident onset density at the
    continuous midpoint of each recorded day and normalize over the observed
    day range.
    """
    days = np.array(sorted({c.S_int for c in cases if c.is_resident}))
    if days.size == 0:
        raise ValueError("no resident (B_int = 0) cases")
    full = np.arange(days.min(), days.max() + 1)
    obs = np.zeros(full.size)
    for c in cases:
        if c.is_resident:
            obs[c.S_int - full[0]] += 1
    dens = marginal_s_density(full - 0.5, r, alpha, beta, L)
    total = dens.sum()
    if not total > 0:
        raise ValueError("onset density vanishes on the observed range")
    expected = obs.sum() * dens / total
    return full, obs, expected


def gof_onset_marginal(cases: Sequence[CaseRecord], r: float, alpha: float,
                       beta: float, L: float = L_DEFAULT, min_cases: int = 30,
                       min_expected: float = 5.0) -> GofResult:
    """Pearson chi-square of resident onset days against the model density.

    Adjacent days are pooled left-to-right until each bin expects at least
    min_expected cases (the trailing remainder merges backwards); the
    statistic is referred to chi-square with bins - 1 degrees of freedom.
    """
    n_res = sum(1 for c in cases if c.is_resident)
    if n_res < min_cases:
        raise ValueError(f"need at least {min_cases} resident cases, have {n_res}")
    _, obs, expected = onset_fit_table(cases, r, alpha, beta, L)
    pooled_o: list[float] = []
    pooled_e: list[float] = []
    acc_o = acc_e = 0.0
    for o, ex in zip(obs, expected):
        acc_o += o
        acc_e += ex
        if acc_e >= min_expected:
            pooled_o.append(acc_o)
            pooled_e.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 and pooled_e:
        pooled_o[-1] += acc_o
        pooled_e[-1] += acc_e
    if len(pooled_e) < 3:
        raise ValueError(f"only {len(pooled_e)} pooled bins; need >= 3 for a stable test")
    o_arr, e_arr = np.array(pooled_o), np.array(pooled_e)
    stat = float(((o_arr - e_arr) ** 2 / e_arr).sum())
    dof = len(pooled_e) - 1
    return GofResult(statistic=stat, dof=dof, p_value=float(chi2.sf(stat, dof)),
                     n_cases=int(o_arr.sum()), n_bins=len(pooled_e))
