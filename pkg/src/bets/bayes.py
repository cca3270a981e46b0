"""Discrete-day Bayesian nonparametric model of exported cases.

Works on whole-day (B*, E*, S*) records.  The incubation period gets a free
pmf h* on 0..29 days with a Dirichlet-style smoothness prior that also
penalizes departures from log-concavity; the epidemic curve is exponential
with one or two stages; departure from Wuhan is uniform-hazard or geometric
with a rate change at the start of the chunyun travel season.  Inference is
random-walk Metropolis-Hastings on unconstrained transforms, with scale
adaptation during burn-in, Gelman-Rubin convergence checks, and posterior
summaries of interpretable functionals.  The symptomatic fraction and the
growth scale cancel between the per-case terms and the selection normalizer,
so neither is identified and only the constraint sum(g*) <= 1 restrains the
scale.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special as sc

from .timeline import CaseRecord

__all__ = [
    "DiscreteConfig",
    "NonparamState",
    "DiscreteData",
    "ChainStore",
    "discretized_base_pmf",
    "log_prior_h",
    "log_prior_rest",
    "log_lik_discrete",
    "rwmh_run",
    "psrf",
    "posterior_summaries",
    "ansari_bradley",
    "rank_location_test",
]

_LN2 = math.log(2.0)
_H_FLOOR = 1e-300

#: Tail cutoffs (days) reported by posterior_summaries.
TAIL_CUTOFFS = (2, 4, 7, 10, 14, 21)


@dataclass(frozen=True)
class DiscreteConfig:
    """Structural choices of the discrete model.

    visitor_weight is the nominal share of visitors in the exposed
    population; it multiplies both the per-case terms and the normalizer and
    cancels, so its value is arbitrary (only departure-density ratios are
    identified) -- it is kept explicit so the likelihood matches its
    definition term by term.
    """

    l: int = 54
    l1: int = 51
    l_chunyun: int = 41
    max_incubation: int = 30
    growth: str = "single"          # "single" | "two_stage"
    departure: str = "uniform"      # "uniform" | "geometric"
    mu: float = 1.0
    strata: str = "none"            # "none" | "gender" | "age50"
    visitor_weight: float = 0.5

    def __post_init__(self):
        if self.growth not in ("single", "two_stage"):
            raise ValueError(f"growth must be 'single' or 'two_stage', got {self.growth!r}")
        if self.departure not in ("uniform", "geometric"):
            raise ValueError(f"departure must be 'uniform' or 'geometric', got {self.departure!r}")
        if self.strata not in ("none", "gender", "age50"):
            raise ValueError(f"strata must be 'none', 'gender' or 'age50', got {self.strata!r}")
        if not 0 < self.l1 <= self.l:
            raise ValueError(f"need 0 < l1 <= l, got l1={self.l1}, l={self.l}")
        if self.max_incubation < 1:
            raise ValueError("max_incubation must be >= 1")
        if not 0 < self.visitor_weight < 1:
            raise ValueError("visitor_weight must be in (0, 1)")

    @property
    def stratum_labels(self) -> tuple[str, ...]:
        return {"none": ("all",), "gender": ("male", "female"),
                "age50": ("under50", "over50")}[self.strata]

    @property
    def n_strata(self) -> int:
        return len(self.stratum_labels)


def discretized_base_pmf(max_incubation: int = 30, shape: float = 9.0,
                         rate: float = 1.5) -> np.ndarray:
    """Whole-day discretization of Gamma(shape, rate), renormalized on
    0..max_incubation-1: h0(k) proportional to H(k+1) - H(k)."""
    k = np.arange(max_incubation + 1)
    cell = sc.gammainc(shape, rate * k[1:]) - sc.gammainc(shape, rate * k[:-1])
    return cell / cell.sum()


@dataclass
class NonparamState:
    """One point of the discrete model's parameter space.

    h is (n_strata, max_incubation); for the uniform departure model set
    lambda_w/lambda_v, for the geometric model set eta, a (2, 2) array of
    leave hazards indexed [resident/visitor, before/after chunyun].
    """

    h: np.ndarray
    r1: float
    kappa: float
    r2: float | None = None
    lambda_w: float | None = None
    lambda_v: float | None = None
    eta: np.ndarray | None = None

    def __post_init__(self):
        self.h = np.atleast_2d(np.asarray(self.h, dtype=float))
        if np.any(self.h < 0):
            raise ValueError("h must be nonnegative")
        bad = np.abs(self.h.sum(axis=1) - 1.0) > 1e-12
        if np.any(bad):
            raise ValueError(f"h rows must sum to 1 (off by {self.h.sum(axis=1)[bad]})")
        if self.eta is not None:
            self.eta = np.asarray(self.eta, dtype=float)
            if self.eta.shape != (2, 2):
                raise ValueError(f"eta must be (2, 2), got {self.eta.shape}")


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------

def log_prior_h(h_star, mu: float, h0) -> float:
    """Smoothness prior on the incubation pmf (constants dropped).

    Dirichlet-like tilt sum (mu*h0(k) - 1) log h(k), plus a log-concavity
    penalty: for each interior k, min(0, 2 log h(k) - log h(k-1) - log h(k+1)).
    """
    h = np.maximum(np.asarray(h_star, dtype=float), _H_FLOOR)
    h0 = np.asarray(h0, dtype=float)
    if h.shape != h0.shape:
        raise ValueError(f"h and h0 shapes differ: {h.shape} vs {h0.shape}")
    log_h = np.log(h)
    tilt = float(((mu * h0 - 1.0) * log_h).sum())
    curv = 2.0 * log_h[1:-1] - log_h[:-2] - log_h[2:]
    return tilt + float(np.minimum(curv, 0.0).sum())


_R2_LOGNORM = math.log(2.0 * math.sqrt(2.0 * math.pi))  # Normal(0, sd 2) at its mode


def log_prior_rest(state: NonparamState, config: DiscreteConfig) -> float:
    """Joint log-prior of the scalar parameters; -inf off the boxes.

    r1 ~ Exp(1); r2 ~ Normal(0, sd 2); kappa ~ U(0,1);
    lambda ~ U(0, 1/L); eta entries ~ U(0,1).
    """
    if state.r1 < 0:
        return -math.inf
    total = -state.r1
    if config.growth == "two_stage":
        if state.r2 is None:
            raise ValueError("two_stage growth needs r2")
        total += -0.125 * state.r2 ** 2 - _R2_LOGNORM
    if not 0 < state.kappa < 1:
        return -math.inf
    if config.departure == "uniform":
        if state.lambda_w is None or state.lambda_v is None:
            raise ValueError("uniform departure needs lambda_w and lambda_v")
        for lam in (state.lambda_w, state.lambda_v):
            if not 0 < lam < 1.0 / config.l:
                return -math.inf
            total += math.log(config.l)
    else:
        if state.eta is None:
            raise ValueError("geometric departure needs eta")
        if np.any(state.eta <= 0) or np.any(state.eta >= 1):
            return -math.inf
    return total


# ---------------------------------------------------------------------------
# Discrete data and likelihood
# ---------------------------------------------------------------------------

_STRATUM_KEY = {
    "none": lambda c: "all",
    "gender": lambda c: c.gender,
    "age50": lambda c: c.age_group,
}


@dataclass
class DiscreteData:
    """Whole-day case arrays plus the per-case incubation index template."""

    b: np.ndarray
    e: np.ndarray
    s: np.ndarray
    stratum: np.ndarray
    case_ids: list
    labels: tuple[str, ...]
    l: int
    max_incubation: int
    n_dropped: int = 0
    t_idx: np.ndarray = field(init=False)
    t_mask: np.ndarray = field(init=False)

    def __post_init__(self):
        l, K = self.l, self.max_incubation
        if np.any((self.b < 0) | (self.b > self.e) | (self.e > l)):
            raise ValueError("need 0 <= B* <= E* <= L for every case")
        if np.any(self.s < self.b):
            raise ValueError("need S* >= B* for every case")
        ks = np.arange(K)
        t_vals = self.s[:, None] - ks[None, :]
        self.t_mask = ((t_vals >= self.b[:, None]) & (t_vals <= self.e[:, None])
                       & (t_vals >= 0) & (t_vals <= l))
        empty = ~self.t_mask.any(axis=1)
        if np.any(empty):
            i = int(np.flatnonzero(empty)[0])
            raise ValueError(
                f"case {self.case_ids[i]}: no feasible infection day for "
                f"(B*={self.b[i]}, E*={self.e[i]}, S*={self.s[i]}) with incubation < {K}")
        self.t_idx = np.clip(t_vals, 0, l)

    @classmethod
    def from_records(cls, cases: Sequence[CaseRecord],
                     config: DiscreteConfig) -> "DiscreteData":
        key = _STRATUM_KEY[config.strata]
        labels = config.stratum_labels
        rows = [(c, labels.index(key(c))) for c in cases if key(c) in labels]
        n_dropped = len(cases) - len(rows)
        if not rows:
            raise ValueError("no cases left after stratum filtering")
        return cls(
            b=np.array([c.B_int for c, _ in rows]),
            e=np.array([c.E_int for c, _ in rows]),
            s=np.array([c.S_int for c, _ in rows]),
            stratum=np.array([st for _, st in rows]),
            case_ids=[c.case_id for c, _ in rows],
            labels=labels, l=config.l, max_incubation=config.max_incubation,
            n_dropped=n_dropped)

    def __len__(self) -> int:
        return len(self.b)


def _growth_curve(state: NonparamState, config: DiscreteConfig) -> np.ndarray | None:
    """g*(t) on t = 0..L, or None when sum(g*) > 1 (rejected state)."""
    t = np.arange(config.l + 1, dtype=float)
    if config.growth == "single":
        expo = state.r1 * t
    else:
        if state.r2 is None:
            raise ValueError("two_stage growth needs r2")
        expo = np.where(t <= config.l1, state.r1 * t,
                        state.r1 * config.l1 + state.r2 * (t - config.l1))
    if not state.kappa > 0:
        return None
    log_g = math.log(state.kappa) + expo
    total = sc.logsumexp(log_g)
    if total > 1e-9:  # sum g* > 1: outside the support
        return None
    return np.exp(log_g)


def _departure_matrix(state: NonparamState, config: DiscreteConfig) -> np.ndarray:
    """P(E* = e | B* = b) on the (b, e) grid, b <= e <= L (lower triangle unused)."""
    T = config.l + 1
    if config.departure == "uniform":
        if state.lambda_w is None or state.lambda_v is None:
            raise ValueError("uniform departure needs lambda_w and lambda_v")
        lam_b = np.where(np.arange(T) == 0, state.lambda_w, state.lambda_v)
        return np.repeat(lam_b[:, None], T, axis=1)
    if state.eta is None:
        raise ValueError("geometric departure needs eta")
    days = np.arange(T)
    pe = np.empty((T, T))
    for cls_idx, rows in ((0, [0]), (1, list(range(1, T)))):
        haz = np.where(days < config.l_chunyun, state.eta[cls_idx, 0], state.eta[cls_idx, 1])
        with np.errstate(divide="ignore"):
            cum = np.concatenate([[0.0], np.cumsum(np.log1p(-haz))])
        log_pe = np.log(haz)[None, :] + cum[None, :-1] - cum[np.array(rows)][:, None]
        pe[rows, :] = np.exp(log_pe)
    return pe


def _stay_weights(config: DiscreteConfig) -> np.ndarray:
    """P(B* = b) for b = 0..L: resident atom and uniform visitor spread."""
    T = config.l + 1
    p = np.full(T, config.visitor_weight / config.l)
    p[0] = 1.0 - config.visitor_weight
    return p


def _log_lik_discrete_arrays(data: DiscreteData, state: NonparamState,
                             config: DiscreteConfig) -> tuple[float, int | None]:
    """(log-likelihood, index of first zero-numerator case or None)."""
    g = _growth_curve(state, config)
    if g is None:
        return -math.inf, None
    pe = _departure_matrix(state, config)
    pb = _stay_weights(config)

    # selection normalizer: sum over b <= e of P(b) P(e|b) * cumulative g on [b, e]
    T = config.l + 1
    cum_g = np.concatenate([[0.0], np.cumsum(g)])
    interval_g = cum_g[None, 1:] - cum_g[:T, None]   # [b, e] inclusive mass
    upper = np.triu(np.ones((T, T), dtype=bool))
    norm = float((pb[:, None] * pe * interval_g * upper).sum())
    if not norm > 0:
        return -math.inf, None

    h_rows = np.maximum(state.h[data.stratum], 0.0)          # (n, K)
    conv = (g[data.t_idx] * data.t_mask * h_rows).sum(axis=1)
    num = pb[data.b] * pe[data.b, data.e] * conv
    zero = num <= 0
    if np.any(zero):
        return -math.inf, int(np.flatnonzero(zero)[0])
    return float(np.log(num).sum() - len(data) * math.log(norm)), None


def log_lik_discrete(cases, state: NonparamState, config: DiscreteConfig) -> float:
    """Selection-adjusted log-likelihood of whole-day case records.

    Per case: P(B*) P(E*|B*) sum_t g*(t) h*(S*-t), the sum running over
    feasible infection days; divided by the total selection probability
    P(D) = sum over the (b, e, t) lattice of P(b) P(e|b) g*(t).  The
    symptomatic fraction cancels and is omitted; the normalizer does not
    involve h*, so it is shared across strata.  States with sum(g*) > 1
    return -inf (outside the support); a case with zero numerator also
    yields -inf, with a warning naming the case.
    """
    data = cases if isinstance(cases, DiscreteData) else DiscreteData.from_records(cases, config)
    if state.h.shape != (len(data.labels), config.max_incubation):
        raise ValueError(f"h must be {(len(data.labels), config.max_incubation)}, "
                         f"got {state.h.shape}")
    val, bad = _log_lik_discrete_arrays(data, state, config)
    if bad is not None:
        warnings.warn(f"case {data.case_ids[bad]} has zero likelihood "
                      f"(B*={data.b[bad]}, E*={data.e[bad]}, S*={data.s[bad]})",
                      RuntimeWarning, stacklevel=2)
    return val


# ---------------------------------------------------------------------------
# Unconstrained parameterization for the sampler
# ---------------------------------------------------------------------------

def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return sc.expit(x)


class _Coords:
    """Layout of the unconstrained vector u for a given config."""

    def __init__(self, config: DiscreteConfig):
        self.config = config
        names = ["log_r1"]
        if config.growth == "two_stage":
            names.append("r2")
        names.append("logit_kappa")
        if config.departure == "uniform":
            names += ["logit_lw", "logit_lv"]
        else:
            names += ["logit_ew1", "logit_ew2", "logit_ev1", "logit_ev2"]
        self.scalar_names = names
        self.n_scalars = len(names)
        self.K = config.max_incubation
        self.S = config.n_strata
        self.h_block = self.K - 1  # last logit pinned to 0
        self.size = self.n_scalars + self.S * self.h_block
        self.scalar_idx = np.arange(self.n_scalars)
        self.h_idx = [self.n_scalars + s * self.h_block + np.arange(self.h_block)
                      for s in range(self.S)]

    def state(self, u: np.ndarray) -> NonparamState:
        c = self.config
        vals = dict(zip(self.scalar_names, u[:self.n_scalars]))
        h = np.empty((self.S, self.K))
        for s in range(self.S):
            y = np.concatenate([u[self.h_idx[s]], [0.0]])
            y = y - sc.logsumexp(y)
            h[s] = np.exp(y)
        kwargs = dict(h=h, r1=math.exp(vals["log_r1"]),
                      kappa=float(_sigmoid(vals["logit_kappa"])))
        if c.growth == "two_stage":
            kwargs["r2"] = vals["r2"]
        if c.departure == "uniform":
            kwargs["lambda_w"] = float(_sigmoid(vals["logit_lw"])) / c.l
            kwargs["lambda_v"] = float(_sigmoid(vals["logit_lv"])) / c.l
        else:
            kwargs["eta"] = np.array([
                [_sigmoid(vals["logit_ew1"]), _sigmoid(vals["logit_ew2"])],
                [_sigmoid(vals["logit_ev1"]), _sigmoid(vals["logit_ev2"])]])
        return NonparamState(**kwargs)

    def pack(self, state: NonparamState) -> np.ndarray:
        c = self.config

        def logit(p):
            p = min(max(p, 1e-15), 1 - 1e-15)
            return math.log(p / (1 - p))

        vals = {"log_r1": math.log(max(state.r1, 1e-300)),
                "logit_kappa": logit(state.kappa)}
        if c.growth == "two_stage":
            vals["r2"] = state.r2
        if c.departure == "uniform":
            vals["logit_lw"] = logit(state.lambda_w * c.l)
            vals["logit_lv"] = logit(state.lambda_v * c.l)
        else:
            vals["logit_ew1"] = logit(state.eta[0, 0])
            vals["logit_ew2"] = logit(state.eta[0, 1])
            vals["logit_ev1"] = logit(state.eta[1, 0])
            vals["logit_ev2"] = logit(state.eta[1, 1])
        u = np.empty(self.size)
        u[:self.n_scalars] = [vals[n] for n in self.scalar_names]
        h = np.maximum(np.atleast_2d(state.h), 1e-15)
        for s in range(self.S):
            y = np.log(h[s])
            u[self.h_idx[s]] = y[:-1] - y[-1]
        return u

    def log_jacobian(self, u: np.ndarray, state: NonparamState) -> float:
        """log |du -> d(natural)| so the u-space target matches the natural prior."""
        vals = dict(zip(self.scalar_names, u[:self.n_scalars]))
        total = vals["log_r1"]  # d r1 / d log r1 = r1
        for name in self.scalar_names:
            if name.startswith("logit_"):
                v = vals[name]
                total += -float(_softplus(v)) - float(_softplus(-v))
        total += float(np.sum(np.log(np.maximum(state.h, _H_FLOOR))))
        return total


def _make_target(coords: _Coords, data: DiscreteData | None,
                 config: DiscreteConfig, h0: np.ndarray, prior_only: bool):
    def log_post(u: np.ndarray) -> float:
        state = coords.state(u)
        total = coords.log_jacobian(u, state)
        total += log_prior_rest(state, config)
        if not np.isfinite(total):
            return -math.inf
        for s in range(coords.S):
            total += log_prior_h(state.h[s], config.mu, h0)
        if not prior_only:
            val, _ = _log_lik_discrete_arrays(data, state, config)
            total += val
        return total if np.isfinite(total) else -math.inf

    return log_post


# ---------------------------------------------------------------------------
# Random-walk Metropolis-Hastings
# ---------------------------------------------------------------------------

@dataclass
class ChainStore:
    """Thinned post-burn-in draws of every chain, plus sampler diagnostics."""

    config: DiscreteConfig
    scalars: dict
    h: np.ndarray                 # (chains, draws, strata, K)
    acceptance: np.ndarray        # (chains, groups), post-burn-in rates
    step_sizes: np.ndarray        # (chains, groups), frozen values
    group_names: list
    steps: int
    burn_in: int
    thin: int
    seed: int
    n_cases: int
    n_dropped: int = 0

    @property
    def n_chains(self) -> int:
        return self.h.shape[0]

    @property
    def n_draws(self) -> int:
        return self.h.shape[1]

    def _stratum_index(self, stratum: str | int | None) -> int:
        labels = self.config.stratum_labels
        if stratum is None:
            if len(labels) > 1:
                raise ValueError(f"stratified store: pick a stratum from {labels}")
            return 0
        if isinstance(stratum, str):
            return labels.index(stratum)
        return int(stratum)

    def functional_values(self, name: str, stratum: str | int | None = None) -> np.ndarray:
        """(chains, draws) array of a named functional of the state.

        Names: any stored scalar ("r1", "r2", "kappa", ...), "doubling_time",
        "mean_incubation", or "p_ge_<c>" for tail mass at >= c days.
        """
        if name in self.scalars:
            return self.scalars[name]
        if name == "doubling_time":
            return _LN2 / self.scalars["r1"]
        k = np.arange(self.config.max_incubation)
        if name == "mean_incubation":
            return (self.h[:, :, self._stratum_index(stratum), :] * k).sum(axis=-1)
        if name.startswith("p_ge_"):
            c = int(name[5:])
            return self.h[:, :, self._stratum_index(stratum), :][:, :, k >= c].sum(axis=-1)
        raise ValueError(f"unknown functional {name!r}")


def _init_state(coords: _Coords, config: DiscreteConfig, h0: np.ndarray,
                rng: np.random.Generator, prior_only: bool) -> np.ndarray:
    """Overdispersed start: h ~ Dirichlet(mu h0) jittered, scalars from priors
    (kappa from its conditional prior given the curve constraint)."""
    c = config
    h = np.empty((coords.S, coords.K))
    for s in range(coords.S):
        draw = rng.dirichlet(np.maximum(c.mu * h0, 1e-3))
        draw = np.maximum(draw, 1e-8)
        logits = np.log(draw) + 0.3 * rng.standard_normal(coords.K)
        h[s] = np.exp(logits - sc.logsumexp(logits))
    r1 = rng.exponential(1.0)
    r2 = 2.0 * rng.standard_normal() if c.growth == "two_stage" else None
    if prior_only:
        cap = 1.0
    else:
        t = np.arange(c.l + 1, dtype=float)
        expo = (r1 * t if c.growth == "single"
                else np.where(t <= c.l1, r1 * t, r1 * c.l1 + r2 * (t - c.l1)))
        cap = math.exp(-float(sc.logsumexp(expo)))
    kappa = min(max(rng.uniform(0.0, cap), 1e-12), 1 - 1e-12)
    kwargs = dict(h=h, r1=r1, r2=r2, kappa=kappa)
    if c.departure == "uniform":
        kwargs["lambda_w"] = rng.uniform(1e-6, 1 - 1e-6) / c.l
        kwargs["lambda_v"] = rng.uniform(1e-6, 1 - 1e-6) / c.l
    else:
        kwargs["eta"] = rng.uniform(1e-6, 1 - 1e-6, size=(2, 2))
    return coords.pack(NonparamState(**kwargs))


def _run_chain_impl(coords: _Coords, target, steps: int, burn_in: int, thin: int,
                    rng: np.random.Generator, u0: np.ndarray, step0: np.ndarray,
                    adapt: bool, h_block_size: int = 5, adapt_window: int = 100):
    """One chain; returns (draw list of u, post-burn acceptance per group,
    final step sizes per group)."""
    groups = [coords.scalar_idx] + coords.h_idx
    n_groups = len(groups)
    step = step0.astype(float).copy()
    u = u0.copy()
    lp = target(u)
    if not np.isfinite(lp):
        raise RuntimeError("initial state has zero posterior density")
    draws: list[np.ndarray] = []
    acc_window = np.zeros(n_groups)
    n_window = np.zeros(n_groups)
    acc_post = np.zeros(n_groups)
    n_post = np.zeros(n_groups)
    for it in range(steps):
        in_burn = it < burn_in
        for gi, idx in enumerate(groups):
            if gi == 0:
                coords_sel = idx
            else:
                take = min(h_block_size, idx.size)
                coords_sel = rng.choice(idx, size=take, replace=False)
            prop = u.copy()
            prop[coords_sel] += step[gi] * rng.standard_normal(coords_sel.size)
            lp_prop = target(prop)
            if math.log(max(rng.random(), 1e-300)) < lp_prop - lp:
                u, lp = prop, lp_prop
                acc_window[gi] += 1
                if not in_burn:
                    acc_post[gi] += 1
            n_window[gi] += 1
            if not in_burn:
                n_post[gi] += 1
            if adapt and in_burn and n_window[gi] >= adapt_window:
                rate = acc_window[gi] / n_window[gi]
                if rate < 0.2:
                    step[gi] = max(step[gi] * 0.7, 1e-6)
                elif rate > 0.4:
                    step[gi] = min(step[gi] * 1.4, 50.0)
                acc_window[gi] = n_window[gi] = 0.0
        if it >= burn_in and (it - burn_in) % thin == 0:
            draws.append(u.copy())
    with np.errstate(invalid="ignore"):
        rates = np.where(n_post > 0, acc_post / np.maximum(n_post, 1), np.nan)
    return draws, rates, step


def rwmh_run(cases, config: DiscreteConfig, steps: int = 80_000, chains: int = 8,
             seed: int = 0, thin: int = 10, prior_only: bool = False,
             step_scale: float | None = None, adapt: bool = True,
             init_states: Sequence[NonparamState] | None = None) -> ChainStore:
    """Sample the discrete model by random-walk Metropolis-Hastings.

    Proposals are Gaussian on the unconstrained coordinates: scalars move
    jointly, each stratum's incubation logits move in random blocks of 5.
    Step scales adapt during the burn-in half toward 20-40% acceptance and
    are frozen afterwards; draws are recorded post-burn-in every `thin`
    steps.  With prior_only=True the likelihood (and its curve-mass
    constraint) is dropped, leaving the bare prior as the target.

    Raises RuntimeError if every chain's post-burn-in acceptance collapses
    below 1% (after adaptation), or if an initial state cannot be found.
    """
    if chains < 1:
        raise ValueError("need at least one chain")
    coords = _Coords(config)
    data = None
    if not prior_only:
        if not cases:
            raise ValueError("no cases (use prior_only=True to sample the prior)")
        data = cases if isinstance(cases, DiscreteData) else DiscreteData.from_records(cases, config)
    h0 = discretized_base_pmf(config.max_incubation)
    target = _make_target(coords, data, config, h0, prior_only)
    burn_in = steps // 2
    n_groups = 1 + coords.S
    base_step = np.array([0.1] + [0.15] * coords.S)
    if step_scale is not None:
        base_step = np.full(n_groups, float(step_scale))
        adapt = adapt and step_scale > 0

    seq = np.random.SeedSequence(seed)
    chain_rngs = [np.random.default_rng(s) for s in seq.spawn(chains)]
    all_draws, all_rates, all_steps = [], [], []
    for ci in range(chains):
        rng = chain_rngs[ci]
        if init_states is not None:
            u0 = coords.pack(init_states[ci % len(init_states)])
            if not np.isfinite(target(u0)):
                raise RuntimeError(f"chain {ci}: supplied initial state has zero density")
        else:
            u0 = None
            for _ in range(1000):
                cand = _init_state(coords, config, h0, rng, prior_only)
                if np.isfinite(target(cand)):
                    u0 = cand
                    break
            if u0 is None:
                raise RuntimeError(f"chain {ci}: could not find a valid initial state")
        draws, rates, fstep = _run_chain_impl(coords, target, steps, burn_in, thin,
                                              rng, u0, base_step, adapt)
        all_draws.append(draws)
        all_rates.append(rates)
        all_steps.append(fstep)

    rates_arr = np.asarray(all_rates)
    if (step_scale is None or step_scale > 0) and np.all(np.nanmax(rates_arr, axis=1) < 0.01):
        raise RuntimeError(
            "sampler stuck: post-burn-in acceptance below 1% on every chain; "
            f"rates per chain/group:\n{rates_arr}")

    n_draws = min(len(d) for d in all_draws)
    scalar_names = coords.scalar_names
    nat_names = {"log_r1": "r1", "logit_kappa": "kappa", "r2": "r2",
                 "logit_lw": "lambda_w", "logit_lv": "lambda_v",
                 "logit_ew1": "eta_w1", "logit_ew2": "eta_w2",
                 "logit_ev1": "eta_v1", "logit_ev2": "eta_v2"}
    scalars = {nat_names[n]: np.empty((chains, n_draws)) for n in scalar_names}
    h_arr = np.empty((chains, n_draws, coords.S, coords.K))
    for ci in range(chains):
        for di in range(n_draws):
            state = coords.state(all_draws[ci][di])
            h_arr[ci, di] = state.h
            vals = {"r1": state.r1, "kappa": state.kappa, "r2": state.r2,
                    "lambda_w": state.lambda_w, "lambda_v": state.lambda_v}
            if state.eta is not None:
                vals.update(eta_w1=state.eta[0, 0], eta_w2=state.eta[0, 1],
                            eta_v1=state.eta[1, 0], eta_v2=state.eta[1, 1])
            for n in scalar_names:
                scalars[nat_names[n]][ci, di] = vals[nat_names[n]]
    return ChainStore(config=config, scalars=scalars, h=h_arr,
                      acceptance=rates_arr, step_sizes=np.asarray(all_steps),
                      group_names=["scalars"] + [f"h[{lb}]" for lb in config.stratum_labels],
                      steps=steps, burn_in=burn_in, thin=thin, seed=seed,
                      n_cases=0 if data is None else len(data),
                      n_dropped=0 if data is None else data.n_dropped)


# ---------------------------------------------------------------------------
# Diagnostics and summaries
# ---------------------------------------------------------------------------

def psrf(chains, functional: str | None = None,
         stratum: str | int | None = None) -> float:
    """Gelman-Rubin potential scale reduction factor of a functional.

    chains: a ChainStore plus a functional name, or directly a
    (n_chains, n_draws) matrix.  R-hat = sqrt(((n-1)/n W + B/n) / W).
    """
    if isinstance(chains, ChainStore):
        if functional is None:
            raise ValueError("give a functional name with a ChainStore")
        mat = chains.functional_values(functional, stratum)
    else:
        mat = np.atleast_2d(np.asarray(chains, dtype=float))
    m, n = mat.shape
    if m < 2:
        raise ValueError(f"need >= 2 chains, got {m}")
    if n < 100:
        raise ValueError(f"need >= 100 draws per chain, got {n}")
    w = float(mat.var(axis=1, ddof=1).mean())
    if w == 0:
        raise ValueError("zero within-chain variance")
    b_over_n = float(mat.mean(axis=1).var(ddof=1))
    return math.sqrt(((n - 1) / n * w + b_over_n) / w)


def posterior_summaries(store: ChainStore) -> dict:
    """Posterior means and central 95% credible intervals of the headline
    functionals, pooled over chains.

    Mean incubation is sum(k h*(k)) on whole days, with no half-day shift.
    Stratified stores add per-stratum entries and first-minus-second
    differences, keyed "name[stratum]" and "name[diff]".
    """
    def summarize(values: np.ndarray) -> dict:
        flat = values.reshape(-1)
        lo, hi = np.percentile(flat, [2.5, 97.5])
        return {"mean": float(flat.mean()), "lo": float(lo), "hi": float(hi)}

    out = {"r1": summarize(store.functional_values("r1")),
           "doubling_time": summarize(store.functional_values("doubling_time"))}
    if "r2" in store.scalars:
        out["r2"] = summarize(store.scalars["r2"])
    labels = store.config.stratum_labels
    names = ["mean_incubation"] + [f"p_ge_{c}" for c in TAIL_CUTOFFS]
    for name in names:
        if len(labels) == 1:
            out[name] = summarize(store.functional_values(name, 0))
        else:
            per = [store.functional_values(name, i) for i in range(len(labels))]
            for lb, vals in zip(labels, per):
                out[f"{name}[{lb}]"] = summarize(vals)
            out[f"{name}[diff]"] = summarize(per[0] - per[1])
    return out


# ---------------------------------------------------------------------------
# Rank tests (normal approximation, midranks for ties)
# ---------------------------------------------------------------------------

def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sv = values[order]
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _score_test_pvalue(scores: np.ndarray, m: int) -> float:
    """Two-sided p-value for the sum of the first m scores under random
    assignment (finite-population normal approximation)."""
    total = len(scores)
    n = total - m
    stat = float(scores[:m].sum())
    mean = m * scores.mean()
    centered = scores - scores.mean()
    var = m * n * float((centered ** 2).sum()) / (total * (total - 1))
    if var <= 0:
        raise ValueError("degenerate scores: all values tied")
    z = (stat - mean) / math.sqrt(var)
    return math.erfc(abs(z) / math.sqrt(2.0))


def _check_samples(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if len(x) < 10 or len(y) < 10:
        raise ValueError(f"need >= 10 observations per sample, got {len(x)}, {len(y)}")
    return x, y


def ansari_bradley(x, y) -> float:
    """Two-sided dispersion test: are x and y equally spread about a common
    median?  Ansari-Bradley scores (distance toward the extreme ranks) with
    midranks for ties, normal approximation."""
    x, y = _check_samples(x, y)
    pooled = np.concatenate([x, y])
    ranks = _midranks(pooled)
    n_tot = len(pooled)
    scores = np.minimum(ranks, n_tot + 1 - ranks)
    return _score_test_pvalue(scores, len(x))


def rank_location_test(x, y) -> float:
    """Two-sided two-sample rank-sum location test (midranks for ties,
    normal approximation)."""
    x, y = _check_samples(x, y)
    pooled = np.concatenate([x, y])
    scores = _midranks(pooled)
    return _score_test_pvalue(scores, len(x))
