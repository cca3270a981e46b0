"""Shared oracles and generators for the test suite.

Everything here is deliberately independent of the library's closed forms:
quadrature oracles integrate the raw densities, the lattice oracle loops in
pure Python, and the discrete cohort generator samples the whole-day model
step by step.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate, special, stats

from bets.timeline import CaseRecord

L = 54.0
_QUAD = dict(limit=400, epsabs=1e-14, epsrel=1e-12)


# ---------------------------------------------------------------------------
# Continuous-model quadrature oracles
# ---------------------------------------------------------------------------

def gamma_pdf(x, shape, rate):
    return stats.gamma.pdf(x, shape, scale=1.0 / rate)


def gamma_cdf(x, shape, rate):
    return stats.gamma.cdf(x, shape, scale=1.0 / rate)


def quad_growth_onset(b, e, s, r, shape, rate):
    """integral over [b, min(e, s)] of exp(r t) * incubation_pdf(s - t)."""
    hi = min(e, s)
    if hi <= b:
        return 0.0
    with warnings.catch_warnings():
        # the tolerances are deliberately past double precision; the result
        # is still the best available and is cross-checked by the tests
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(lambda t: math.exp(r * t) * gamma_pdf(s - t, shape, rate),
                                b, hi, **_QUAD)
    return val


def quad_cond_term(b, e, s, r, shape, rate):
    """Per-case conditional log-term from raw integrals."""
    num = r * quad_growth_onset(b, e, s, r, shape, rate)
    return math.log(num) - math.log(math.exp(r * e) - math.exp(r * b))


def quad_uncond_term(b, e, s, rho, r, shape, rate, horizon=L):
    """Per-case unconditional log-term from raw integrals."""
    num = quad_growth_onset(b, e, s, r, shape, rate)
    w = 1.0 if b == 0 else rho / horizon
    denom = 1.0 + rho * (1.0 - 2.0 / (r * horizon))
    return math.log(r * r * w * num * math.exp(-r * horizon) / denom)


def quad_trunc_term(b, e, s, r, shape, rate, m):
    """Per-case right-truncated conditional log-term from raw integrals.

    The normalizer is integrated over its difference range in one pass so
    the oracle does not lose digits subtracting two nearly equal tails.
    """
    num = r * quad_growth_onset(b, e, s, r, shape, rate) * math.exp(-r * m)
    lo = max(m - e, 0.0)
    denom, _ = integrate.quad(
        lambda u: r * math.exp(-r * u) * gamma_cdf(u, shape, rate),
        lo, m - b, limit=400, epsabs=1e-16, epsrel=1e-13)
    return math.log(num) - math.log(denom)


def quad_selection_exact(pi, lambda_w, lambda_v, kappa, nu, r, horizon=L):
    """P(D) by direct double integration over the stay law."""

    def growth_mass(b, e):
        return kappa / r * (math.exp(r * min(e, horizon)) - math.exp(r * b))

    resident, _ = integrate.quad(lambda e: lambda_w * growth_mass(0.0, e),
                                 0.0, horizon, **_QUAD)
    visitor, _ = integrate.dblquad(
        lambda e, b: lambda_v * growth_mass(b, e),
        0.0, horizon, lambda b: b, lambda b: horizon)
    return nu * ((1 - pi) * resident + pi * visitor / horizon)


# ---------------------------------------------------------------------------
# Discrete-model lattice oracle (pure Python loops)
# ---------------------------------------------------------------------------

def brute_log_lik_discrete(records, state, config):
    """log_lik_discrete by materializing every lattice probability."""
    l = config.l
    K = config.max_incubation

    def g_star(t):
        if config.growth == "single":
            expo = state.r1 * t
        else:
            expo = (state.r1 * t if t <= config.l1
                    else state.r1 * config.l1 + state.r2 * (t - config.l1))
        return state.kappa * math.exp(expo)

    def p_b(b):
        return (1.0 - config.visitor_weight if b == 0
                else config.visitor_weight / config.l)

    def p_e(b, e):
        if config.departure == "uniform":
            return state.lambda_w if b == 0 else state.lambda_v
        row = 0 if b == 0 else 1
        prob = 1.0
        for d in range(b, e):
            haz = state.eta[row, 0] if d < config.l_chunyun else state.eta[row, 1]
            prob *= 1.0 - haz
        haz_e = state.eta[row, 0] if e < config.l_chunyun else state.eta[row, 1]
        return prob * haz_e

    norm = 0.0
    for b in range(l + 1):
        for e in range(b, l + 1):
            for t in range(b, e + 1):
                norm += p_b(b) * p_e(b, e) * g_star(t)

    labels = config.stratum_labels
    key = {"none": lambda c: "all", "gender": lambda c: c.gender,
           "age50": lambda c: c.age_group}[config.strata]
    h = np.atleast_2d(state.h)
    total = 0.0
    for c in records:
        si = labels.index(key(c))
        num = 0.0
        for t in range(c.B_int, c.E_int + 1):
            lag = c.S_int - t
            if 0 <= lag < K:
                num += g_star(t) * h[si, lag]
        num *= p_b(c.B_int) * p_e(c.B_int, c.E_int)
        total += math.log(num) - math.log(norm)
    return total


# ---------------------------------------------------------------------------
# Synthetic-data generators
# ---------------------------------------------------------------------------

def discretized_gamma_pmf(shape=1.86, rate=0.33, K=30):
    k = np.arange(K + 1)
    cell = special.gammainc(shape, rate * k[1:]) - special.gammainc(shape, rate * k[:-1])
    return cell / cell.sum()


def discrete_cohort(n, rng, r1=0.14, lam=1.0 / 70, shape=1.86, rate=0.33,
                    horizon=54, K=30, curve_mass=0.9):
    """Sample whole-day case records from the discrete-day model itself.

    Returns (records, true incubation pmf).  The uniform-hazard departure
    model and a single exponential curve are used; continuous fields carry
    arbitrary in-cell values (only the integer days matter downstream).
    """
    h = discretized_gamma_pmf(shape, rate, K)
    g = np.exp(r1 * np.arange(horizon + 1))
    g *= curve_mass / g.sum()
    pb = np.full(horizon + 1, 0.5 / horizon)
    pb[0] = 0.5
    recs = []
    while len(recs) < n:
        b = int(rng.choice(horizon + 1, p=pb))
        u = rng.random()
        if u >= lam * (horizon - b + 1):
            continue
        e = b + int(u / lam)
        gm = g[b:e + 1]
        tot = gm.sum()
        if rng.random() >= tot:
            continue
        t = b + int(rng.choice(e - b + 1, p=gm / tot))
        s = t + int(rng.choice(K, p=h))
        recs.append(CaseRecord(case_id=f"d{len(recs)}", B_int=b, E_int=e,
                               S_int=s, B=float(b), E=e + 0.5, S=s + 0.25))
    return recs, h


def random_discrete_state(rng, config):
    """A random in-support NonparamState for the given config."""
    from bets.bayes import NonparamState

    K = config.max_incubation
    h = rng.dirichlet(np.full(K, 0.6), size=config.n_strata)
    h = np.maximum(h, 1e-12)
    h /= h.sum(axis=1, keepdims=True)
    r1 = rng.uniform(0.01, 0.2)
    r2 = rng.normal(0.0, 0.1) if config.growth == "two_stage" else None
    t = np.arange(config.l + 1, dtype=float)
    expo = (r1 * t if config.growth == "single"
            else np.where(t <= config.l1, r1 * t,
                          r1 * config.l1 + r2 * (t - config.l1)))
    cap = 1.0 / np.exp(expo).sum()
    kappa = rng.uniform(0.1, 0.9) * cap
    kwargs = dict(h=h, r1=r1, r2=r2, kappa=kappa)
    if config.departure == "uniform":
        kwargs["lambda_w"] = rng.uniform(0.2, 0.95) / config.l
        kwargs["lambda_v"] = rng.uniform(0.2, 0.95) / config.l
    else:
        kwargs["eta"] = rng.uniform(0.02, 0.5, size=(2, 2))
    return NonparamState(**kwargs)


def random_selected_records(n, rng, horizon=54, max_lag=12, strata=False):
    """Quick feasible whole-day records (not from any particular law)."""
    recs = []
    genders = ["male", "female"]
    for i in range(n):
        b = int(rng.integers(0, horizon - 10)) if rng.random() > 0.5 else 0
        e = int(rng.integers(b, horizon + 1))
        t = int(rng.integers(b, e + 1))
        s = t + int(rng.integers(0, max_lag))
        recs.append(CaseRecord(
            case_id=f"r{i}", B_int=b, E_int=e, S_int=max(s, b + 1),
            B=float(b), E=e + 0.5, S=max(s, b + 1) + 0.25,
            gender=genders[int(rng.integers(0, 2))] if strata else "unknown",
            age_group="under50" if rng.random() < 0.6 else "over50"))
    return recs
