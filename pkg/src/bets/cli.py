"""Command-line interface for cohort building, simulation, fitting and MCMC.

Each subcommand wraps one library workflow and writes machine-readable
artifacts (JSON/CSV) into an output directory (--out, or the
BETS_OUTPUT_DIR environment variable, or the working directory).  All
writes are atomic, outputs are deterministic given --seed, and every JSON
artifact embeds {version, seed, flags} provenance.

Exit codes: 0 success; 2 bad flags, unreadable or unparseable input;
3 empty cohort; 4 a module rejected the request (message forwarded).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import glob
import io
import json
import math
import os
import re
import sys
from datetime import date

import numpy as np

from . import __version__, bayes, generative, inference, timeline
from .likelihood import LikelihoodError
from .timeline import CaseRecord, CaseTableError

_KIND_FLAG = {"cond": "cond", "uncond": "uncond", "cond-trunc": "cond_trunc"}
_PARAM_FLAG = {"rho": "rho", "doubling-time": "doubling_time",
               "median": "median_incubation", "q95": "q95_incubation"}


class CliError(Exception):
    """Carries an exit code alongside the message."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------

def _out_dir(args) -> str:
    out = args.out or os.environ.get("BETS_OUTPUT_DIR") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _provenance(args) -> dict:
    flags = {}
    for key, value in vars(args).items():
        if key == "func":
            continue
        if isinstance(value, date):
            value = value.isoformat()
        flags[key] = value
    return {"version": __version__, "seed": getattr(args, "seed", None),
            "flags": flags}


def _write_json(path: str, payload: dict, args) -> None:
    payload = dict(payload)
    payload["provenance"] = _provenance(args)
    timeline.write_json(path, payload)


def _write_csv(path: str, header: list, rows: list) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    timeline.atomic_write_text(path, buf.getvalue())


def _parse_day(text: str) -> int:
    """Epoch day from an integer literal or a calendar date."""
    try:
        return int(text)
    except ValueError:
        pass
    parsed = timeline.parse_date(text)
    if parsed is None:
        raise CliError(2, f"cannot read {text!r} as a date or day number")
    return timeline.to_epoch(parsed)


def _parse_date_flag(text: str) -> date:
    return timeline.from_epoch(_parse_day(text))


def _load_cohort(path: str) -> list[CaseRecord]:
    if not os.path.exists(path):
        raise CliError(2, f"input file not found: {path}")
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            rows = json.load(fh)
        records = [CaseRecord.from_ints(
            str(r["case_id"]), int(r["B_int"]), int(r["E_int"]), int(r["S_int"]),
            gender=r.get("gender"), age_group=r.get("age_group"),
            confirmed_int=r.get("confirmed_int"), location=r.get("location"))
            for r in rows]
    else:
        records = timeline.read_cohort_csv(path)
    if not records:
        raise CliError(3, f"cohort is empty: {path}")
    return records


def _filter_location(records: list[CaseRecord], location: str | None) -> list[CaseRecord]:
    if location is None:
        return records
    kept = [c for c in records if c.location == location]
    if not kept:
        raise CliError(3, f"no cases at location {location!r}")
    return kept


def _parse_fixed(pairs: list[str] | None) -> dict:
    fixed = {}
    for pair in pairs or []:
        name, sep, value = pair.partition("=")
        if not sep:
            raise CliError(2, f"--fix wants name=value, got {pair!r}")
        key = _PARAM_FLAG.get(name, name.replace("-", "_"))
        try:
            fixed[key] = float(value)
        except ValueError:
            raise CliError(2, f"--fix {name}: {value!r} is not a number") from None
    return fixed


def _build_params(args) -> generative.GenerativeParams:
    if args.median is not None or args.q95 is not None:
        if args.median is None or args.q95 is None:
            raise CliError(2, "give both --median and --q95 (or neither)")
        return generative.params_from_theta(
            args.rho, args.growth_rate, median=args.median, q95=args.q95,
            nu=args.symptomatic, growth_mass=args.infected_mass,
            r2=args.late_growth_rate, l1=args.stage_break)
    return generative.params_from_theta(
        args.rho, args.growth_rate, args.shape, args.rate,
        nu=args.symptomatic, growth_mass=args.infected_mass,
        r2=args.late_growth_rate, l1=args.stage_break)


def _params_dict(p: generative.GenerativeParams) -> dict:
    inc = {"kind": p.incubation.kind}
    if p.incubation.kind == "gamma":
        inc.update(shape=p.incubation.alpha, rate=p.incubation.beta)
    else:
        inc["pmf"] = list(p.incubation.pmf)
    return {"visitor_fraction": p.pi, "leave_rate_resident": p.lambda_w,
            "leave_rate_visitor": p.lambda_v, "growth_scale": p.kappa,
            "growth_rate": p.r, "late_growth_rate": p.r2,
            "stage_break": p.l1, "horizon": p.L,
            "symptomatic_fraction": p.nu, "incubation": inc}


def _fit_from_flags(records: list[CaseRecord], args) -> inference.FitResult:
    kind = _KIND_FLAG[args.likelihood]
    M = None
    if kind == "cond_trunc":
        if args.truncate_at is None:
            raise CliError(2, "--likelihood cond-trunc needs --truncate-at")
        M = float(_parse_day(args.truncate_at))
        records = [c for c in records if c.S <= M]
        if not records:
            raise CliError(3, "no cases at or before the truncation day")
    fixed = _parse_fixed(getattr(args, "fix", None))
    options = inference.FitOptions(seed=args.seed)
    return inference.mle_fit(records, kind, M=M, fixed=fixed, options=options)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    try:
        with open(args.input, encoding="utf-8") as fh:
            raw = timeline.parse_case_table(fh, delimiter=args.delimiter)
    except FileNotFoundError:
        raise CliError(2, f"input file not found: {args.input}") from None
    rules = timeline.CohortRules(
        keep_outside=args.keep_outside,
        arrival_cutoff=_parse_date_flag(args.arrival_cutoff),
        impute_end_to=_parse_date_flag(args.impute_end_to),
        require_symptom=not args.keep_asymptomatic,
        reclassify_outside=args.reclassify_outside)
    cohort, report = timeline.build_cohort(raw, rules)
    out = _out_dir(args)
    _write_json(os.path.join(out, "exclusions.json"),
                {"kept": report.n_kept, **report.to_dict()}, args)
    if not cohort:
        raise CliError(3, "all rows excluded; see exclusions.json")
    if args.format == "json":
        timeline.write_cohort_json(cohort, os.path.join(out, "cohort.json"))
    else:
        timeline.write_cohort_csv(cohort, os.path.join(out, "cohort.csv"))
    print(f"kept {report.n_kept} of {report.n_input} cases -> {out}")
    return 0


def cmd_simulate(args) -> int:
    params = _build_params(args)
    rng = np.random.default_rng(args.seed)
    records, acceptance = generative.sample_exported(args.n, params, rng)
    if args.confirm_lag is not None:
        lags = rng.poisson(args.confirm_lag, size=len(records))
        records = [dataclasses.replace(c, confirmed_int=c.S_int + int(lag))
                   for c, lag in zip(records, lags)]
    out = _out_dir(args)
    timeline.write_cohort_csv(records, os.path.join(out, "cohort.csv"))
    _write_json(os.path.join(out, "simulate.json"),
                {"params": _params_dict(params), "seed": args.seed,
                 "n_cases": len(records), "acceptance_rate": acceptance}, args)
    print(f"simulated {len(records)} exported cases -> {out}")
    return 0


def cmd_fit(args) -> int:
    records = _filter_location(_load_cohort(args.input), args.location)
    fit = _fit_from_flags(records, args)
    out = _out_dir(args)
    _write_json(os.path.join(out, "fit.json"), fit.to_dict(), args)
    if args.format == "table":
        d = fit.display
        rows = [("log_lik", fit.log_lik), ("doubling_time", d.doubling_time),
                ("median_incubation", d.median_incubation),
                ("q95_incubation", d.q95_incubation)]
        if d.rho is not None:
            rows.append(("rho", d.rho))
        width = max(len(k) for k, _ in rows)
        for k, v in rows:
            print(f"{k:<{width}}  {v:.4f}")
    else:
        print(f"fit ({fit.kind}, n={fit.n_cases}, converged={fit.converged}) -> "
              f"{os.path.join(out, 'fit.json')}")
    return 0


def cmd_ci(args) -> int:
    records = _filter_location(_load_cohort(args.input), args.location)
    fit = _fit_from_flags(records, args)
    param = _PARAM_FLAG[args.param]
    kind = _KIND_FLAG[args.likelihood]
    M = fit.M
    if args.method == "profile":
        ci = inference.profile_ci(records if M is None else [c for c in records if c.S <= M],
                                  kind, fit, param, level=args.level, M=M,
                                  options=inference.FitOptions(seed=args.seed))
    else:
        ci = inference.bootstrap_ci(
            records if M is None else [c for c in records if c.S <= M], kind,
            statistic=param, n_boot=args.n_boot, level=args.level,
            rng=np.random.default_rng(args.seed), M=M,
            fixed=_parse_fixed(args.fix), method=args.boot_method,
            n_jobs=args.workers)
    out = _out_dir(args)
    _write_json(os.path.join(out, "ci.json"),
                {"param": param, "method": args.method, "fit": fit.to_dict(),
                 "ci": ci.to_dict()}, args)
    print(f"{param} {args.method} CI: [{ci.lo:.4f}, {ci.hi:.4f}] -> {out}")
    return 0


def cmd_bias_demo(args) -> int:
    records = _load_cohort(args.input)
    day_from = _parse_day(args.date_from)
    day_to = _parse_day(args.date_to)
    if day_to < day_from:
        raise CliError(2, f"--to {args.date_to} is before --from {args.date_from}")
    cutoffs = list(range(day_from, day_to + 1))
    rows = inference.bias_sweep(records, cutoffs, m_offset=args.m_offset,
                                min_cases=args.min_cases, bootstrap_b=args.n_boot,
                                level=args.level, rng=np.random.default_rng(args.seed),
                                n_jobs=args.workers)
    out = _out_dir(args)
    _write_json(os.path.join(out, "sweep.json"),
                {"rows": [r.to_dict() for r in rows]}, args)
    csv_rows = []
    for r in rows:
        day_iso = timeline.from_epoch(r.cutoff).isoformat()
        for quantile, est, band in (("median", r.median, r.median_ci),
                                    ("q95", r.q95, r.q95_ci)):
            lo, hi = (band.lo, band.hi) if band is not None else ("", "")
            csv_rows.append([day_iso, r.model, quantile,
                             "" if est is None else est, lo, hi])
    _write_csv(os.path.join(out, "sweep.csv"),
               ["date", "model", "quantile", "estimate", "lo", "hi"], csv_rows)
    n_fitted = sum(r.fitted for r in rows)
    print(f"swept {len(cutoffs)} cutoffs x 3 models ({n_fitted} fits) -> {out}")
    return 0


def cmd_gof(args) -> int:
    records = _filter_location(_load_cohort(args.input), args.location)
    if args.growth_rate is not None:
        if args.shape is None or args.rate is None:
            raise CliError(2, "--growth-rate needs --shape and --rate too")
        r, alpha, beta = args.growth_rate, args.shape, args.rate
        fit_info = {"source": "flags"}
    else:
        fit = _fit_from_flags(records, args)
        theta = fit.theta
        r, alpha, beta = theta.r, theta.alpha, theta.beta
        fit_info = fit.to_dict()
    gof = inference.gof_onset_marginal(records, r, alpha, beta,
                                       min_expected=args.min_expected)
    out = _out_dir(args)
    _write_json(os.path.join(out, "gof.json"),
                {"fit": fit_info, "gof": gof.to_dict()}, args)
    print(f"onset GOF: chi2={gof.statistic:.3f} dof={gof.dof} p={gof.p_value:.4f} -> {out}")
    return 0


_MCMC_FUNCTIONALS = ("r1", "doubling_time", "mean_incubation", "p_ge_14")


def cmd_mcmc(args) -> int:
    config = bayes.DiscreteConfig(
        growth=args.growth.replace("-", "_"), departure=args.departure,
        mu=args.mu, strata=args.strata)
    if args.prior_only:
        records = None
    else:
        if args.input is None:
            raise CliError(2, "--in is required unless --prior-only is set")
        records = _load_cohort(args.input)
    store = bayes.rwmh_run(records, config, steps=args.steps, chains=args.chains,
                           seed=args.seed, thin=args.thin,
                           prior_only=args.prior_only)
    out = _out_dir(args)

    labels = config.stratum_labels
    scalar_names = sorted(store.scalars)
    header = ["draw"] + scalar_names + [
        f"h_{lb}_{k}" for lb in labels for k in range(config.max_incubation)]
    for ci_ in range(store.n_chains):
        rows = []
        for di in range(store.n_draws):
            row = [di] + [store.scalars[nm][ci_, di] for nm in scalar_names]
            row += [store.h[ci_, di, si, k] for si in range(len(labels))
                    for k in range(config.max_incubation)]
            rows.append(row)
        _write_csv(os.path.join(out, f"draws_chain{ci_}.csv"), header, rows)

    diag: dict = {"acceptance": store.acceptance.tolist(),
                  "step_sizes": store.step_sizes.tolist(),
                  "groups": store.group_names, "n_draws": store.n_draws,
                  "psrf": {}}
    for name in _MCMC_FUNCTIONALS:
        if name == "r2" and "r2" not in store.scalars:
            continue
        strata = [None] if name in store.scalars or name == "doubling_time" else labels
        for st in strata:
            key = name if st is None or len(labels) == 1 else f"{name}[{st}]"
            st_arg = st if st is not None else (0 if name not in store.scalars
                                                and name != "doubling_time" else None)
            try:
                diag["psrf"][key] = bayes.psrf(store, name, st_arg)
            except ValueError as exc:
                diag["psrf"][key] = None
                diag.setdefault("psrf_notes", {})[key] = str(exc)
    _write_json(os.path.join(out, "diagnostics.json"), diag, args)

    summary = bayes.posterior_summaries(store)
    _write_json(os.path.join(out, "mcmc_summary.json"),
                {"summaries": summary, "n_cases": store.n_cases,
                 "n_dropped": store.n_dropped, "chains": store.n_chains,
                 "draws_per_chain": store.n_draws}, args)
    print(f"{store.n_chains} chains x {store.n_draws} draws -> {out}")
    return 0


def _kde_rows(records: list[CaseRecord], strata: str, bandwidth: float,
              step: float) -> list:
    key = {"none": lambda c: "all", "gender": lambda c: c.gender,
           "age50": lambda c: c.age_group}[strata]
    groups: dict[str, list[float]] = {}
    for c in records:
        label = key(c)
        if label is not None:
            groups.setdefault(label, []).append(c.S - c.E)
    if not groups:
        raise CliError(3, "no cases with a known stratum label")
    rows = []
    for label in sorted(groups):
        x = np.asarray(groups[label])
        grid = np.arange(math.floor(x.min() - 4 * bandwidth),
                         math.ceil(x.max() + 4 * bandwidth) + step / 2, step)
        dens = np.exp(-0.5 * ((grid[:, None] - x[None, :]) / bandwidth) ** 2)
        dens = dens.sum(axis=1) / (len(x) * bandwidth * math.sqrt(2 * math.pi))
        rows += [[label, float(g), float(d)] for g, d in zip(grid, dens)]
    return rows


def cmd_plot_data(args) -> int:
    out = _out_dir(args)
    if args.kind == "onset-fit":
        records = _load_cohort(args.input)
        if args.growth_rate is not None and args.shape is not None and args.rate is not None:
            r, alpha, beta = args.growth_rate, args.shape, args.rate
        else:
            fit = _fit_from_flags(records, args)
            r, alpha, beta = fit.theta.r, fit.theta.alpha, fit.theta.beta
        days, observed, expected = inference.onset_fit_table(records, r, alpha, beta)
        rows = [[int(day), timeline.from_epoch(int(day)).isoformat(), int(obs), float(exp)]
                for day, obs, exp in zip(days, observed, expected)]
        _write_csv(os.path.join(out, "onset_fit.csv"),
                   ["day", "date", "observed", "expected"], rows)
    elif args.kind == "sweep-bands":
        if not os.path.exists(args.input):
            raise CliError(2, f"input file not found: {args.input}")
        with open(args.input, encoding="utf-8") as fh:
            sweep = json.load(fh)
        rows = []
        for r in sweep["rows"]:
            day_iso = timeline.from_epoch(r["cutoff"]).isoformat()
            for quantile in ("median", "q95"):
                band = r.get(f"{quantile}_ci")
                lo, hi = (band["lo"], band["hi"]) if band else ("", "")
                est = r.get(quantile)
                rows.append([day_iso, r["model"], quantile,
                             "" if est is None else est, lo, hi])
        _write_csv(os.path.join(out, "sweep_bands.csv"),
                   ["date", "model", "quantile", "estimate", "lo", "hi"], rows)
    elif args.kind == "posterior-pmf":
        paths = sorted(glob.glob(os.path.join(args.input, "draws_chain*.csv")))
        if not paths:
            raise CliError(2, f"no draws_chain*.csv under {args.input}")
        pooled: dict[str, list] = {}
        for path in paths:
            with open(path, newline="", encoding="utf-8") as fh:
                reader = csv.DictReader(fh)
                for row in reader:
                    for col, val in row.items():
                        m = re.fullmatch(r"h_(.+)_(\d+)", col)
                        if m:
                            pooled.setdefault(col, []).append(float(val))
        rows = []
        for col in sorted(pooled, key=lambda c: (c.rsplit("_", 1)[0],
                                                 int(c.rsplit("_", 1)[1]))):
            label, k = col[2:].rsplit("_", 1)
            vals = np.asarray(pooled[col])
            lo, hi = np.percentile(vals, [2.5, 97.5])
            rows.append([label, int(k), float(vals.mean()), float(lo), float(hi)])
        _write_csv(os.path.join(out, "posterior_pmf.csv"),
                   ["stratum", "days", "mean", "lo", "hi"], rows)
    else:  # se-density
        records = _load_cohort(args.input)
        rows = _kde_rows(records, args.strata, args.bandwidth, args.grid_step)
        _write_csv(os.path.join(out, "se_density.csv"),
                   ["stratum", "x", "density"], rows)
    print(f"plot data ({args.kind}) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_out(p) -> None:
    p.add_argument("--out", default=None, metavar="DIR",
                   help="output directory (default: $BETS_OUTPUT_DIR or '.')")


def _add_seed(p) -> None:
    p.add_argument("--seed", type=int, default=0, help="random seed (echoed in outputs)")


def _add_fit_flags(p, kinds=("cond", "uncond", "cond-trunc")) -> None:
    p.add_argument("--in", dest="input", required=True, metavar="FILE",
                   help="cohort table (.csv or .json)")
    p.add_argument("--likelihood", choices=list(kinds), default="uncond",
                   help="which selection-adjusted likelihood to maximize")
    if "cond-trunc" in kinds:
        p.add_argument("--truncate-at", default=None, metavar="DAY",
                       help="onset cutoff (date or day number) for cond-trunc")
    p.add_argument("--fix", action="append", metavar="NAME=VALUE",
                   help="pin a parameter (rho, doubling-time, median, q95, r)")
    p.add_argument("--location", default=None,
                   help="keep only cases confirmed at this location")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bets",
        description="Growth and incubation inference for travel-quarantine "
                    "selected epidemic case data.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("ingest", help="parse a raw case table into an analysis cohort")
    p.add_argument("--in", dest="input", required=True, metavar="CSV",
                   help="raw case table")
    p.add_argument("--delimiter", default=",", help="input field delimiter")
    p.add_argument("--keep-outside", choices=["no", "likely", "yes"], default="no",
                   help="most suspicious outside-infection label to keep")
    p.add_argument("--arrival-cutoff", default="2020-01-23", metavar="DATE",
                   help="drop cases arriving after this date")
    p.add_argument("--impute-end-to", default="2020-01-23", metavar="DATE",
                   help="stay-end imputed to this date when missing")
    p.add_argument("--keep-asymptomatic", action="store_true",
                   help="keep cases with no symptom-onset date")
    p.add_argument("--reclassify-outside", action="store_true",
                   help="recompute the outside label from stay and cluster data")
    p.add_argument("--format", choices=["csv", "json"], default="csv",
                   help="cohort output format")
    _add_out(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("simulate", help="draw a synthetic exported-case cohort")
    p.add_argument("--n", type=int, required=True, help="number of exported cases")
    p.add_argument("--rho", type=float, default=0.45, help="visitor travel-mix parameter")
    p.add_argument("--growth-rate", type=float, default=0.30,
                   help="epidemic growth exponent per day")
    p.add_argument("--shape", type=float, default=1.86, help="incubation gamma shape")
    p.add_argument("--rate", type=float, default=0.33, help="incubation gamma rate")
    p.add_argument("--median", type=float, default=None,
                   help="incubation median (with --q95, replaces shape/rate)")
    p.add_argument("--q95", type=float, default=None,
                   help="incubation 95th percentile (with --median)")
    p.add_argument("--symptomatic", type=float, default=0.8,
                   help="fraction of infections that develop symptoms")
    p.add_argument("--infected-mass", type=float, default=0.5,
                   help="total infection probability over the whole window")
    p.add_argument("--late-growth-rate", type=float, default=None,
                   help="second-stage growth exponent (two-stage epidemic)")
    p.add_argument("--stage-break", type=float, default=51.0,
                   help="day the second growth stage starts")
    p.add_argument("--confirm-lag", type=float, default=None,
                   help="mean onset-to-confirmation lag; adds Poisson confirmation days")
    _add_seed(p)
    _add_out(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="maximum-likelihood fit of growth and incubation")
    _add_fit_flags(p)
    p.add_argument("--format", choices=["json", "table"], default="json",
                   help="also print an aligned table to stdout")
    _add_seed(p)
    _add_out(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("ci", help="confidence interval for one fitted parameter")
    _add_fit_flags(p)
    p.add_argument("--param", choices=sorted(_PARAM_FLAG), required=True,
                   help="parameter to interval-estimate")
    p.add_argument("--method", choices=["profile", "bootstrap"], default="profile",
                   help="likelihood-ratio inversion or case-resampling bootstrap")
    p.add_argument("--level", type=float, default=0.95, help="confidence level")
    p.add_argument("--n-boot", type=int, default=200, help="bootstrap resamples")
    p.add_argument("--boot-method", choices=["basic", "percentile"], default="basic",
                   help="bootstrap interval construction")
    p.add_argument("--workers", type=int, default=1, help="parallel refit processes")
    _add_seed(p)
    _add_out(p)
    p.set_defaults(func=cmd_ci)

    p = sub.add_parser("bias-demo",
                       help="incubation estimates by confirmation cutoff, three models")
    p.add_argument("--in", dest="input", required=True, metavar="FILE",
                   help="cohort table with confirmation dates")
    p.add_argument("--from", dest="date_from", default="2020-01-23", metavar="DATE",
                   help="first confirmation cutoff (inclusive)")
    p.add_argument("--to", dest="date_to", default="2020-02-18", metavar="DATE",
                   help="last confirmation cutoff (inclusive)")
    p.add_argument("--m-offset", type=int, default=7,
                   help="days subtracted from the cutoff for the onset bound")
    p.add_argument("--min-cases", type=int, default=20,
                   help="skip cutoffs with fewer cases")
    p.add_argument("--n-boot", type=int, default=0,
                   help="bootstrap resamples per cutoff for bands (0 = none)")
    p.add_argument("--level", type=float, default=0.95, help="band level")
    p.add_argument("--workers", type=int, default=1, help="parallel fit processes")
    _add_seed(p)
    _add_out(p)
    p.set_defaults(func=cmd_bias_demo)

    p = sub.add_parser("gof", help="chi-square fit of the resident onset-day histogram")
    _add_fit_flags(p, kinds=("cond", "uncond"))
    p.add_argument("--growth-rate", type=float, default=None,
                   help="skip fitting; use this growth exponent")
    p.add_argument("--shape", type=float, default=None, help="with --growth-rate")
    p.add_argument("--rate", type=float, default=None, help="with --growth-rate")
    p.add_argument("--min-expected", type=float, default=5.0,
                   help="minimum expected count per pooled bin")
    _add_seed(p)
    _add_out(p)
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("mcmc", help="Bayesian nonparametric fit on whole-day data")
    p.add_argument("--in", dest="input", default=None, metavar="FILE",
                   help="cohort table (optional with --prior-only)")
    p.add_argument("--steps", type=int, default=80_000, help="iterations per chain")
    p.add_argument("--chains", type=int, default=8, help="independent chains")
    p.add_argument("--mu", type=float, default=1.0, help="prior concentration")
    p.add_argument("--growth", choices=["single", "two-stage"], default="single",
                   help="epidemic curve: one exponent or a break at day 51")
    p.add_argument("--departure", choices=["uniform", "geometric"], default="uniform",
                   help="departure-day model")
    p.add_argument("--strata", choices=["none", "gender", "age50"], default="none",
                   help="fit a separate incubation pmf per stratum")
    p.add_argument("--thin", type=int, default=10, help="keep every k-th draw")
    p.add_argument("--prior-only", action="store_true",
                   help="sample the bare prior (no data)")
    _add_seed(p)
    _add_out(p)
    p.set_defaults(func=cmd_mcmc)

    p = sub.add_parser("plot-data", help="emit long-format CSVs for plotting")
    p.add_argument("--kind", required=True,
                   choices=["onset-fit", "sweep-bands", "posterior-pmf", "se-density"],
                   help="which dataset to emit")
    p.add_argument("--in", dest="input", required=True, metavar="PATH",
                   help="cohort table, sweep.json, or MCMC output directory")
    p.add_argument("--likelihood", choices=["cond", "uncond"], default="uncond",
                   help="fit used for onset-fit expectations")
    p.add_argument("--fix", action="append", metavar="NAME=VALUE",
                   help="pin a parameter for the onset-fit fit")
    p.add_argument("--location", default=None,
                   help="keep only cases confirmed at this location")
    p.add_argument("--growth-rate", type=float, default=None,
                   help="onset-fit: skip fitting; use this growth exponent")
    p.add_argument("--shape", type=float, default=None, help="with --growth-rate")
    p.add_argument("--rate", type=float, default=None, help="with --growth-rate")
    p.add_argument("--strata", choices=["none", "gender", "age50"], default="gender",
                   help="se-density grouping")
    p.add_argument("--bandwidth", type=float, default=1.0,
                   help="se-density Gaussian kernel width (days)")
    p.add_argument("--grid-step", type=float, default=0.25,
                   help="se-density evaluation grid step")
    _add_seed(p)
    _add_out(p)
    p.set_defaults(func=cmd_plot_data)

    return parser


def check_help_roundtrip() -> None:
    """Assert every parsed flag is documented and vice versa, per subparser."""
    parser = build_parser()
    stack = [("bets", parser)]
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            stack += list(action.choices.items())
    for name, sp in stack:
        help_text = sp.format_help()
        documented = set(re.findall(r"--[a-z][a-z0-9-]*", help_text))
        parsed = {opt for a in sp._actions for opt in a.option_strings
                  if opt.startswith("--")}
        missing = parsed - documented
        extra = {d for d in documented if d not in parsed
                 and not any(d in (a.help or "") for a in sp._actions)
                 and not any(d in (a.metavar or "") for a in sp._actions)}
        if missing:
            raise AssertionError(f"{name}: flags not in help text: {sorted(missing)}")
        if extra:
            raise AssertionError(f"{name}: help mentions unknown flags: {sorted(extra)}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except CaseTableError as exc:
        print(f"error: cannot parse input: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (LikelihoodError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
