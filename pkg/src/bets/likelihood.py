"""Closed-form mathematics of the exported-case model.

The observation model: an individual begins a Wuhan stay at B (B = 0 for
residents, otherwise uniform on (0, L]), leaves at E (uniform density with an
atom at "never left"), is infected at T with instantaneous rate proportional
to the epidemic curve g(t) = kappa*exp(r*t), and shows symptoms at
S = T + incubation, with a Gamma(alpha, beta) incubation period.  A case is
observed ("exported") only if it falls in the selection set

    D = {B <= T <= E <= L,  T <= S < infinity},

i.e. the person was infected during the stay, left before the travel
quarantine at L = 54, and eventually showed symptoms.  This module provides
the resulting log-likelihoods of (B, E, S) for observed cases:

* conditional on (B, E)                       -- :func:`log_lik_cond`
* joint in (B, E, S) with the travel-mix rho  -- :func:`log_lik_uncond`
* additionally right-truncated at S <= M      -- :func:`log_lik_cond_trunc`

plus the selection probability, the marginal densities of infection and onset
times among exported residents, and the additive growth-rate correction for
naive curve fits to onset counts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, optimize
from scipy import special as sc

from .timeline import CaseRecord

__all__ = [
    "L_DEFAULT",
    "R_SWITCH",
    "TERM_FLOOR",
    "LikelihoodError",
    "ParamTheta",
    "DisplayTheta",
    "ExponentialGrowth",
    "gamma_cdf",
    "gamma_quantile",
    "quantiles_to_shape_rate",
    "shape_rate_to_quantiles",
    "gamma_exp_integral",
    "selection_prob_given_be",
    "selection_prob_total",
    "log_lik_cond",
    "log_lik_uncond",
    "log_lik_cond_trunc",
    "marginal_t_density",
    "marginal_s_density",
    "growth_bias_correction",
    "growth_bias_fixed_point",
    "case_arrays",
    "cond_log_terms",
    "uncond_log_terms",
    "trunc_log_terms",
]

#: Horizon of the selection window (travel-quarantine day).
L_DEFAULT = 54.0

#: |r| below this uses the exact r = 0 limiting forms.
R_SWITCH = 1e-8

#: Per-case likelihood terms are floored here when clamping is requested.
TERM_FLOOR = 1e-300
_LOG_FLOOR = math.log(TERM_FLOOR)

_LN2 = math.log(2.0)


class LikelihoodError(ValueError):
    """An observed case has zero or undefined likelihood at the given parameters."""


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamTheta:
    """Natural parameters: travel mix rho, growth rate r, incubation Gamma(alpha, beta).

    rho = (lambda_V / lambda_W) * pi / (1 - pi) is the visitor-to-resident
    mix; it only enters the unconditional likelihood and may be None for
    conditional fits.
    """

    r: float
    alpha: float
    beta: float
    rho: float | None = None

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"need alpha, beta > 0, got ({self.alpha}, {self.beta})")
        if self.rho is not None and self.rho < 0:
            raise ValueError(f"need rho >= 0, got {self.rho}")

    def display(self) -> "DisplayTheta":
        med, q95 = shape_rate_to_quantiles(self.alpha, self.beta)
        doubling = math.inf if self.r == 0 else _LN2 / self.r
        return DisplayTheta(doubling_time=doubling, median_incubation=med,
                            q95_incubation=q95, rho=self.rho)


@dataclass(frozen=True)
class DisplayTheta:
    """Interpretable reparameterization: doubling time and incubation quantiles."""

    doubling_time: float
    median_incubation: float
    q95_incubation: float
    rho: float | None = None

    def __post_init__(self):
        if not self.doubling_time > 0:
            raise ValueError(f"need doubling_time > 0, got {self.doubling_time}")
        if not 0 < self.median_incubation < self.q95_incubation:
            raise ValueError("need 0 < median < q95 of the incubation period")

    def theta(self) -> ParamTheta:
        r = 0.0 if math.isinf(self.doubling_time) else _LN2 / self.doubling_time
        alpha, beta = quantiles_to_shape_rate(self.median_incubation, self.q95_incubation)
        return ParamTheta(r=r, alpha=alpha, beta=beta, rho=self.rho)


# ---------------------------------------------------------------------------
# Gamma distribution helpers
# ---------------------------------------------------------------------------

def gamma_cdf(alpha: float, beta: float, x):
    """Gamma(shape alpha, rate beta) CDF, H_{alpha,beta}(x); 0 for x <= 0."""
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"need alpha, beta > 0, got ({alpha}, {beta})")
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("gamma_cdf: x must be finite")
    out = sc.gammainc(alpha, beta * np.maximum(arr, 0.0))
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def gamma_quantile(alpha: float, beta: float, p):
    """Inverse of :func:`gamma_cdf` in x."""
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"need alpha, beta > 0, got ({alpha}, {beta})")
    out = sc.gammaincinv(alpha, p) / beta
    return float(out) if np.isscalar(p) else out


def shape_rate_to_quantiles(alpha: float, beta: float) -> tuple[float, float]:
    """(median, 95% quantile) of Gamma(alpha, beta)."""
    return gamma_quantile(alpha, beta, 0.5), gamma_quantile(alpha, beta, 0.95)


_ALPHA_LO, _ALPHA_HI = 1e-3, 1e3


def quantiles_to_shape_rate(median: float, q95: float) -> tuple[float, float]:
    """Invert (median, q95) to the unique Gamma (shape, rate).

    Uses the scale-free quantile ratio q95/median, which is strictly
    decreasing in the shape, for 1-D root finding; the rate then follows from
    the median.  Raises ValueError if no shape in [1e-3, 1e3] matches.
    """
    if not (0 < median < q95) or not (math.isfinite(median) and math.isfinite(q95)):
        raise ValueError(f"need 0 < median < q95, got ({median}, {q95})")
    ratio = q95 / median

    def f(log_a: float) -> float:
        a = math.exp(log_a)
        return sc.gammaincinv(a, 0.95) / sc.gammaincinv(a, 0.5) - ratio

    lo, hi = math.log(_ALPHA_LO), math.log(_ALPHA_HI)
    flo, fhi = f(lo), f(hi)
    if not (flo > 0 > fhi):  # f decreasing: needs f(lo) > 0 > f(hi)
        raise ValueError(f"quantile ratio {ratio:.6g} has no Gamma shape in "
                         f"[{_ALPHA_LO}, {_ALPHA_HI}]")
    log_a = optimize.brentq(f, lo, hi, xtol=1e-14, rtol=8.9e-16)
    alpha = math.exp(log_a)
    beta = sc.gammaincinv(alpha, 0.5) / median
    if abs(gamma_cdf(alpha, beta, median) - 0.5) > 1e-9 or \
       abs(gamma_cdf(alpha, beta, q95) - 0.95) > 1e-9:
        raise ValueError(f"quantile inversion failed for ({median}, {q95})")
    return alpha, beta


def _gamma_cdf_diff(alpha: float, rate: float, x_hi, x_lo):
    """H_{alpha,rate}(x_hi) - H_{alpha,rate}(x_lo), elementwise, x_hi >= x_lo.

    Uses the upper tail when both arguments sit in it, avoiding cancellation
    of nearly-equal CDF values.
    """
    z_hi = rate * np.maximum(np.asarray(x_hi, dtype=float), 0.0)
    z_lo = rate * np.maximum(np.asarray(x_lo, dtype=float), 0.0)
    p_lo = sc.gammainc(alpha, z_lo)
    upper = sc.gammaincc(alpha, z_lo) - sc.gammaincc(alpha, z_hi)
    lower = sc.gammainc(alpha, z_hi) - p_lo
    return np.where(p_lo > 0.5, upper, lower)


# ---------------------------------------------------------------------------
# Growth curve and selection probabilities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentialGrowth:
    """Epidemic curve g(t) = kappa * exp(r t) with its exact integral."""

    kappa: float
    r: float

    def __call__(self, t):
        return self.kappa * np.exp(self.r * np.asarray(t, dtype=float))

    def integral(self, a: float, b: float) -> float:
        """Integral of g over [a, b] (0 if b <= a)."""
        if b <= a:
            return 0.0
        if abs(self.r) < R_SWITCH:
            return self.kappa * (b - a)
        return self.kappa * math.exp(self.r * a) * math.expm1(self.r * (b - a)) / self.r


def gamma_exp_integral(b: float, e: float, s: float, r: float,
                       alpha: float, beta: float) -> float:
    """Exact value of  integral_b^{min(s,e)} exp(r t) h_{alpha,beta}(s - t) dt.

    h is the Gamma(alpha, beta) density.  Closed form:
    (beta/(beta+r))^alpha * exp(r s) * [H_{a,b+r}(s-b) - H_{a,b+r}((s-e)_+)],
    valid for r > -beta; the r = 0 case is the plain CDF difference.
    """
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"need alpha, beta > 0, got ({alpha}, {beta})")
    if not r > -beta:
        raise ValueError(f"need r > -beta, got r={r}, beta={beta}")
    upper = min(s, e)
    if upper <= b:
        return 0.0
    rate = beta + r
    diff = float(_gamma_cdf_diff(alpha, rate, s - b, max(s - e, 0.0)))
    return (beta / rate) ** alpha * math.exp(r * s) * max(diff, 0.0)


def selection_prob_given_be(b: float, e: float, growth) -> float:
    """Chance (up to the symptomatic fraction nu) that a (b, e) stay yields an
    exported case: the integral of the epidemic curve over the stay."""
    return growth.integral(b, min(e, math.inf))


def selection_prob_total(pi: float, lambda_w: float, lambda_v: float,
                         kappa: float, nu: float, r: float,
                         L: float = L_DEFAULT) -> tuple[float, float]:
    """Total selection probability P(D): (closed-form approximation, exact).

    The approximation, valid for r >> 1/L, is
    nu * kappa * exp(rL) / r^2 * [(1-pi) lambda_W + pi lambda_V (1 - 2/(rL))];
    the exact value integrates the per-stay probability over the (B, E) law
    by adaptive quadrature.
    """
    if not r > 0:
        raise ValueError(f"approximation requires r > 0, got {r}")
    approx = nu * kappa * math.exp(r * L) / r ** 2 * (
        (1 - pi) * lambda_w + pi * lambda_v * (1 - 2 / (r * L)))
    growth = ExponentialGrowth(kappa, r)
    resident, _ = integrate.quad(lambda e: growth.integral(0.0, e), 0.0, L)
    visitor, _ = integrate.dblquad(lambda e, b: growth.integral(b, e),
                                   0.0, L, lambda b: b, lambda b: L)
    exact = nu * ((1 - pi) * lambda_w * resident + pi * lambda_v / L * visitor)
    return approx, exact


# ---------------------------------------------------------------------------
# Per-case log terms (vectorized internals)
# ---------------------------------------------------------------------------

def case_arrays(cases: Sequence[CaseRecord]):
    """Split CaseRecords into (B, E, S, resident) numpy arrays."""
    b = np.array([c.B for c in cases], dtype=float)
    e = np.array([c.E for c in cases], dtype=float)
    s = np.array([c.S for c in cases], dtype=float)
    resident = np.array([c.B_int == 0 for c in cases], dtype=bool)
    return b, e, s, resident


def cond_log_terms(b, e, s, r: float, alpha: float, beta: float) -> np.ndarray:
    """Log-likelihood terms of S | (B, E), case in the selection set.

    For r > 0 the per-case density of S given (B, E, selection) is

        r (beta/(beta+r))^alpha e^{rS} [H_{a,b+r}(S-B) - H_{a,b+r}((S-E)_+)]
        / (e^{rE} - e^{rB});

    the r = 0 limit replaces growth weighting by Lebesgue measure on (B, E).
    Invalid cases produce -inf entries (no exception at this level).
    """
    b = np.asarray(b, float)
    e = np.asarray(e, float)
    s = np.asarray(s, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if abs(r) < R_SWITCH:
            diff = _gamma_cdf_diff(alpha, beta, s - b, np.maximum(s - e, 0.0))
            return np.log(np.clip(diff, 0.0, None)) - np.log(e - b)
        rate = beta + r
        diff = _gamma_cdf_diff(alpha, rate, s - b, np.maximum(s - e, 0.0))
        # log(e^{rE} - e^{rB}) = rE + log(1 - e^{-r(E-B)}), stable for r(E-B) small
        log_span = r * e + np.log1p(-np.exp(-r * (e - b)))
        return (math.log(r) + alpha * (math.log(beta) - math.log(rate))
                + r * s + np.log(np.clip(diff, 0.0, None)) - log_span)


def uncond_log_terms(b, e, s, resident, rho: float, r: float,
                     alpha: float, beta: float, L: float = L_DEFAULT) -> np.ndarray:
    """Log-likelihood terms of (B, E, S) jointly, selection-normalized.

    Requires r > 0 (the closed-form selection normalizer is the r >> 1/L
    approximation).  Residents weigh 1, visitors rho/L, and the shared
    normalizer is 1 + rho (1 - 2/(rL)).  Returns None-like -inf rows for
    structurally impossible cases; raises ValueError if the normalizer is
    not positive (parameters outside the valid region).
    """
    if not r > 0:
        raise ValueError(f"unconditional likelihood needs r > 0, got {r}")
    if rho < 0:
        raise ValueError(f"need rho >= 0, got {rho}")
    denom = 1.0 + rho * (1.0 - 2.0 / (r * L))
    if not denom > 0:
        raise ValueError(f"travel-mix normalizer 1 + rho(1 - 2/(rL)) = {denom:.3g} <= 0")
    b = np.asarray(b, float)
    e = np.asarray(e, float)
    s = np.asarray(s, float)
    resident = np.asarray(resident, bool)
    rate = beta + r
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = _gamma_cdf_diff(alpha, rate, s - b, np.maximum(s - e, 0.0))
        log_w = np.where(resident, 0.0, math.log(rho / L) if rho > 0 else -math.inf)
        return (2.0 * math.log(r) + alpha * (math.log(beta) - math.log(rate))
                + log_w - math.log(denom) + r * (s - L)
                + np.log(np.clip(diff, 0.0, None)))


def _trunc_normalizer(x_hi, x_lo, r: float, alpha: float, beta: float):
    """Difference of the truncation normalizer Z_r at two points.

    Z_r(x) = r * int_0^x e^{-r u} H_{alpha,beta}(u) du
           = (beta/(beta+r))^alpha H_{a,b+r}(x) - e^{-rx} H_{a,b}(x)   (r != 0),
    and the r = 0 branch drops the leading r:
    Z_0(x) = int_0^x H(u) du = x H_{a,b}(x) - (alpha/beta) H_{a+1,b}(x).
    Computed with the tail-difference trick to dodge cancellation when both
    arguments sit deep in the Gamma upper tail (M far beyond every stay).
    """
    x_hi = np.asarray(x_hi, float)
    x_lo = np.asarray(x_lo, float)
    if abs(r) < R_SWITCH:
        main = x_hi * sc.gammainc(alpha, beta * x_hi) - x_lo * sc.gammainc(alpha, beta * x_lo)
        corr = alpha / beta * _gamma_cdf_diff(alpha + 1, beta, x_hi, x_lo)
        return main - corr
    rate = beta + r
    part1 = (beta / rate) ** alpha * _gamma_cdf_diff(alpha, rate, x_hi, x_lo)
    part2 = (np.exp(-r * x_lo) * sc.gammainc(alpha, beta * x_lo)
             - np.exp(-r * x_hi) * sc.gammainc(alpha, beta * x_hi))
    return part1 + part2


def trunc_log_terms(b, e, s, r: float, alpha: float, beta: float, M: float) -> np.ndarray:
    """Log-likelihood terms of S | (B, E), conditioned on S <= M as well.

    The numerator matches :func:`cond_log_terms`; the normalizer integrates
    onset mass before M over infection times in the stay, i.e.
    Z_r(M - B) - Z_r((M - E)_+) (see :func:`_trunc_normalizer`).
    """
    b = np.asarray(b, float)
    e = np.asarray(e, float)
    s = np.asarray(s, float)
    x_hi = M - b
    x_lo = np.maximum(M - e, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = _trunc_normalizer(x_hi, x_lo, r, alpha, beta)
        log_z = np.log(np.clip(z, 0.0, None))
        if abs(r) < R_SWITCH:
            diff = _gamma_cdf_diff(alpha, beta, s - b, np.maximum(s - e, 0.0))
            return np.log(np.clip(diff, 0.0, None)) - log_z
        rate = beta + r
        diff = _gamma_cdf_diff(alpha, rate, s - b, np.maximum(s - e, 0.0))
        return (math.log(r) + alpha * (math.log(beta) - math.log(rate))
                + r * (s - M) + np.log(np.clip(diff, 0.0, None)) - log_z)


# ---------------------------------------------------------------------------
# Public case-list log-likelihoods (strict: bad cases raise)
# ---------------------------------------------------------------------------

def _sum_strict(terms: np.ndarray, cases: Sequence[CaseRecord], what: str) -> float:
    bad = np.flatnonzero(~np.isfinite(terms))
    if bad.size:
        i = int(bad[0])
        raise LikelihoodError(
            f"{what}: case {cases[i].case_id} (B={cases[i].B}, E={cases[i].E}, "
            f"S={cases[i].S}) has non-positive likelihood")
    return float(terms.sum())


def log_lik_cond(cases: Sequence[CaseRecord], r: float, alpha: float, beta: float) -> float:
    """Sum of conditional-on-(B, E) log-likelihood terms over the cases."""
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"need alpha, beta > 0, got ({alpha}, {beta})")
    if r < 0:
        raise ValueError(f"need r >= 0, got {r}")
    if not cases:
        raise ValueError("no cases")
    b, e, s, _ = case_arrays(cases)
    return _sum_strict(cond_log_terms(b, e, s, r, alpha, beta), cases, "conditional likelihood")


def log_lik_uncond(cases: Sequence[CaseRecord], rho: float, r: float,
                   alpha: float, beta: float, L: float = L_DEFAULT) -> float:
    """Sum of joint (B, E, S) log-likelihood terms over the cases."""
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"need alpha, beta > 0, got ({alpha}, {beta})")
    if not cases:
        raise ValueError("no cases")
    b, e, s, resident = case_arrays(cases)
    terms = uncond_log_terms(b, e, s, resident, rho, r, alpha, beta, L)
    return _sum_strict(terms, cases, "unconditional likelihood")


def log_lik_cond_trunc(cases: Sequence[CaseRecord], r: float, alpha: float,
                       beta: float, M: float) -> float:
    """Sum of right-truncated (S <= M) conditional log-likelihood terms."""
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"need alpha, beta > 0, got ({alpha}, {beta})")
    if r < 0:
        raise ValueError(f"need r >= 0, got {r}")
    if not cases:
        raise ValueError("no cases")
    b, e, s, _ = case_arrays(cases)
    late = np.flatnonzero(s > M)
    if late.size:
        c = cases[int(late[0])]
        raise LikelihoodError(f"truncated likelihood: case {c.case_id} has S={c.S} > M={M}")
    return _sum_strict(trunc_log_terms(b, e, s, r, alpha, beta, M), cases,
                       "truncated likelihood")


# ---------------------------------------------------------------------------
# Marginal densities among exported residents, and the bias correction
# ---------------------------------------------------------------------------

def marginal_t_density(t, r: float, L: float = L_DEFAULT, normalized: bool = False):
    """Density (up to constant) of the infection time among exported residents:
    exp(r t) (L - t) on [0, L], 0 elsewhere.  With normalized=True the exact
    normalizing constant (e^{rL} - 1 - rL)/r^2 is applied."""
    t_arr = np.asarray(t, dtype=float)
    val = np.where((t_arr >= 0) & (t_arr <= L), np.exp(r * t_arr) * (L - t_arr), 0.0)
    if normalized:
        if abs(r) < R_SWITCH:
            z = L * L / 2.0
        else:
            z = (math.expm1(r * L) - r * L) / r ** 2
        val = val / z
    return float(val) if np.isscalar(t) or t_arr.ndim == 0 else val


def marginal_s_density(s, r: float, alpha: float, beta: float,
                       L: float = L_DEFAULT):
    """Unnormalized onset-time density among exported residents.

    exp(r s) { (L - s)(1 - H_{a,b+r}((s-L)_+)) + a/(b+r) (1 - H_{a+1,b+r}((s-L)_+)) }.

    For s <= L this reduces to exp(r s) (L + alpha/(beta+r) - s).  The shape
    is a large-(beta+r)L approximation: accurate on s >= L/2 and degrading
    when L <= 4(alpha+5)/(beta+r), in which situation a warning is issued.
    """
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"need alpha, beta > 0, got ({alpha}, {beta})")
    rate = beta + r
    if not rate > 0:
        raise ValueError(f"need beta + r > 0, got {rate}")
    if L <= 4.0 * (alpha + 5.0) / rate:
        warnings.warn("marginal_s_density: approximation degrades for "
                      f"L = {L} <= 4(alpha+5)/(beta+r) = {4 * (alpha + 5) / rate:.3g}",
                      RuntimeWarning, stacklevel=2)
    s_arr = np.asarray(s, dtype=float)
    x = np.maximum(s_arr - L, 0.0)
    val = np.exp(r * s_arr) * ((L - s_arr) * sc.gammaincc(alpha, rate * x)
                               + alpha / rate * sc.gammaincc(alpha + 1, rate * x))
    val = np.clip(val, 0.0, None)
    return float(val) if np.isscalar(s) or s_arr.ndim == 0 else val


def growth_bias_correction(alpha: float, beta: float, r_ref: float, c: float) -> float:
    """Additive downward bias of a naive log-linear fit to onset counts.

    A log-linear regression of onset incidence over the last c days before
    the quarantine estimates roughly r - 1/(alpha/(beta + r) + c/2); this
    returns that deficit evaluated at a reference rate r_ref.
    """
    if not c > 0:
        raise ValueError(f"need window c > 0, got {c}")
    if not beta + r_ref > 0:
        raise ValueError(f"need beta + r_ref > 0, got {beta + r_ref}")
    if not alpha > 0:
        raise ValueError(f"need alpha > 0, got {alpha}")
    return 1.0 / (alpha / (beta + r_ref) + c / 2.0)


def growth_bias_fixed_point(alpha: float, beta: float, r_naive: float, c: float,
                            tol: float = 1e-8, max_iter: int = 500) -> float:
    """Self-consistent corrected rate: the solution of r = r_naive + correction(r)."""
    r = r_naive
    for _ in range(max_iter):
        r_next = r_naive + growth_bias_correction(alpha, beta, r, c)
        if abs(r_next - r) < tol:
            return r_next
        r = r_next
    raise RuntimeError(f"fixed-point correction did not converge from r_naive={r_naive}")
