"""End-to-end tests of the command-line interface.

Every test drives ``bets.cli.main`` in-process with a real argv list and
inspects exit codes, stdout, and the JSON/CSV artifacts.
"""

from __future__ import annotations

import csv
import json
import os

import pytest

import bets
from bets import cli, timeline

RAW_HEADER = ("case_id,residence,gender,age,known_contact,cluster,outside,"
              "begin_wuhan,end_wuhan,arrived,symptom,initial,confirmed,location")

RAW_ROWS = (
    "w-1,Wuhan,M,34,no,,no,,22-Jan,22-Jan,23-Jan,25-Jan,28-Jan,Beijing",
    "v-2,Shanghai,F,61,no,,no,10-Jan,20-Jan,20-Jan,21-Jan,,24-Jan,Shanghai",
    "x-1,Wuhan,m,40,no,,yes,,20-Jan,21-Jan,22-Jan,,25-Jan,",
    "x-2,Wuhan,f,29,no,,no,,20-Jan,21-Jan,,,25-Jan,",
    "w-3,Wuhan,m,50,no,,no,,21-Jan,21-Jan,24-Jan,,26-Jan,Chengdu",
)


def write_raw(path, rows=RAW_ROWS) -> str:
    path.write_text("\n".join([RAW_HEADER, *rows]) + "\n")
    return str(path)


def read_json(out_dir, name) -> dict:
    with open(os.path.join(out_dir, name), encoding="utf-8") as fh:
        return json.load(fh)


def read_csv(out_dir, name):
    with open(os.path.join(out_dir, name), newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory) -> str:
    out = str(tmp_path_factory.mktemp("sim"))
    assert cli.main(["simulate", "--n", "250", "--seed", "3", "--out", out]) == 0
    return out


@pytest.fixture(scope="module")
def lag_dir(tmp_path_factory) -> str:
    out = str(tmp_path_factory.mktemp("lag"))
    code = cli.main(["simulate", "--n", "400", "--seed", "5",
                     "--confirm-lag", "6", "--out", out])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def sweep_dir(lag_dir, tmp_path_factory) -> str:
    out = str(tmp_path_factory.mktemp("sweep"))
    code = cli.main(["bias-demo", "--in", os.path.join(lag_dir, "cohort.csv"),
                     "--from", "58", "--to", "60", "--min-cases", "25",
                     "--n-boot", "8", "--seed", "1", "--out", out])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def mcmc_dir(tmp_path_factory) -> str:
    src = str(tmp_path_factory.mktemp("mcmc-in"))
    out = str(tmp_path_factory.mktemp("mcmc-out"))
    assert cli.main(["simulate", "--n", "120", "--seed", "11", "--out", src]) == 0
    code = cli.main(["mcmc", "--in", os.path.join(src, "cohort.csv"),
                     "--steps", "1200", "--chains", "2", "--seed", "4",
                     "--out", out])
    assert code == 0
    return out


# ---------------------------------------------------------------------------
# Parser basics
# ---------------------------------------------------------------------------

def test_every_flag_is_documented():
    cli.check_help_roundtrip()


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert bets.__version__ in capsys.readouterr().out


def test_missing_subcommand_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

def test_ingest_writes_cohort_and_exclusions(tmp_path, capsys):
    raw = write_raw(tmp_path / "raw.csv")
    out = str(tmp_path / "out")
    assert cli.main(["ingest", "--in", raw, "--out", out]) == 0
    assert "kept 3 of 5" in capsys.readouterr().out
    cohort = timeline.read_cohort_csv(os.path.join(out, "cohort.csv"))
    assert sorted(c.case_id for c in cohort) == ["v-2", "w-1", "w-3"]
    excl = read_json(out, "exclusions.json")
    assert excl["kept"] == 3
    prov = excl["provenance"]
    assert prov["version"] == bets.__version__
    assert prov["flags"]["keep_outside"] == "no"


def test_ingest_json_format(tmp_path):
    raw = write_raw(tmp_path / "raw.csv")
    out = str(tmp_path / "out")
    code = cli.main(["ingest", "--in", raw, "--format", "json", "--out", out])
    assert code == 0
    rows = json.loads(open(os.path.join(out, "cohort.json")).read())
    assert isinstance(rows, list) and rows[0]["case_id"] == "w-1"


def test_ingest_all_excluded_exits_3(tmp_path, capsys):
    raw = write_raw(tmp_path / "raw.csv", rows=RAW_ROWS[2:4])
    out = str(tmp_path / "out")
    assert cli.main(["ingest", "--in", raw, "--out", out]) == 3
    assert "excluded" in capsys.readouterr().err
    assert read_json(out, "exclusions.json")["kept"] == 0


def test_ingest_unparseable_header_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,foo\n1,2\n")
    assert cli.main(["ingest", "--in", str(bad), "--out", str(tmp_path)]) == 2
    assert "cannot parse input" in capsys.readouterr().err


def test_missing_input_file_exits_2(tmp_path, capsys):
    code = cli.main(["fit", "--in", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path)])
    assert code == 2
    assert "not found" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def test_simulate_outputs_are_deterministic(tmp_path):
    out = str(tmp_path)
    argv = ["simulate", "--n", "80", "--seed", "9", "--out", out]
    assert cli.main(argv) == 0
    first = {name: open(os.path.join(out, name), "rb").read()
             for name in ("cohort.csv", "simulate.json")}
    assert cli.main(argv) == 0
    for name, blob in first.items():
        assert open(os.path.join(out, name), "rb").read() == blob


def test_simulate_artifacts(sim_dir):
    meta = read_json(sim_dir, "simulate.json")
    assert meta["n_cases"] == 250
    assert 0 < meta["acceptance_rate"] < 1
    assert meta["params"]["growth_rate"] == 0.3
    assert meta["provenance"]["seed"] == 3
    cohort = timeline.read_cohort_csv(os.path.join(sim_dir, "cohort.csv"))
    assert len(cohort) == 250
    assert all(c.confirmed_int is None for c in cohort)


def test_simulate_confirm_lag_adds_confirmation_days(lag_dir):
    cohort = timeline.read_cohort_csv(os.path.join(lag_dir, "cohort.csv"))
    assert all(c.confirmed_int is not None and c.confirmed_int >= c.S_int
               for c in cohort)


# ---------------------------------------------------------------------------
# fit / ci
# ---------------------------------------------------------------------------

def test_fit_json_artifact(sim_dir, tmp_path, capsys):
    out = str(tmp_path)
    code = cli.main(["fit", "--in", os.path.join(sim_dir, "cohort.csv"),
                     "--likelihood", "uncond", "--seed", "1", "--out", out])
    assert code == 0
    assert "converged=True" in capsys.readouterr().out
    fit = read_json(out, "fit.json")
    assert fit["kind"] == "uncond" and fit["converged"]
    assert fit["n_cases"] == 250
    assert 1.5 < fit["display"]["doubling_time"] < 3.5
    assert 0.1 < fit["theta"]["rho"] < 2.0
    assert fit["provenance"]["flags"]["likelihood"] == "uncond"


def test_fit_table_output(sim_dir, tmp_path, capsys):
    code = cli.main(["fit", "--in", os.path.join(sim_dir, "cohort.csv"),
                     "--likelihood", "cond", "--format", "table",
                     "--out", str(tmp_path)])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    names = [ln.split()[0] for ln in lines]
    assert names == ["log_lik", "doubling_time", "median_incubation",
                     "q95_incubation"]
    for ln in lines:
        float(ln.split()[-1])


def test_fit_trunc_needs_cutoff(sim_dir, tmp_path, capsys):
    code = cli.main(["fit", "--in", os.path.join(sim_dir, "cohort.csv"),
                     "--likelihood", "cond-trunc", "--out", str(tmp_path)])
    assert code == 2
    assert "--truncate-at" in capsys.readouterr().err


@pytest.mark.parametrize("pair", ["rho:0.4", "rho=abc"])
def test_fit_bad_fix_exits_2(sim_dir, tmp_path, pair):
    code = cli.main(["fit", "--in", os.path.join(sim_dir, "cohort.csv"),
                     "--fix", pair, "--out", str(tmp_path)])
    assert code == 2


def test_fit_unknown_fixed_name_exits_4(sim_dir, tmp_path, capsys):
    code = cli.main(["fit", "--in", os.path.join(sim_dir, "cohort.csv"),
                     "--fix", "zeta=1", "--out", str(tmp_path)])
    assert code == 4
    assert "cannot fix" in capsys.readouterr().err


def test_location_filter_no_match_exits_3(tmp_path):
    rows = [{"case_id": "a-1", "B_int": 0, "E_int": 53, "S_int": 56,
             "location": "Beijing"},
            {"case_id": "a-2", "B_int": 41, "E_int": 51, "S_int": 52,
             "location": "Shanghai"}]
    src = tmp_path / "cohort.json"
    src.write_text(json.dumps(rows))
    code = cli.main(["fit", "--in", str(src), "--location", "Paris",
                     "--out", str(tmp_path)])
    assert code == 3


def test_ci_bootstrap(sim_dir, tmp_path, capsys):
    out = str(tmp_path)
    code = cli.main(["ci", "--in", os.path.join(sim_dir, "cohort.csv"),
                     "--likelihood", "cond", "--param", "median",
                     "--method", "bootstrap", "--n-boot", "10",
                     "--boot-method", "percentile", "--seed", "2", "--out", out])
    assert code == 0
    assert "median_incubation bootstrap CI" in capsys.readouterr().out
    payload = read_json(out, "ci.json")
    assert payload["param"] == "median_incubation"
    ci = payload["ci"]
    assert ci["lo"] < payload["fit"]["display"]["median_incubation"] < ci["hi"]


# ---------------------------------------------------------------------------
# bias-demo / gof
# ---------------------------------------------------------------------------

def test_bias_demo_rows_and_bands(sweep_dir):
    rows = read_json(sweep_dir, "sweep.json")["rows"]
    assert len(rows) == 9  # 3 cutoffs x 3 models
    assert {r["model"] for r in rows} == {"r0", "growth", "growth_trunc"}
    fitted = [r for r in rows if r["fitted"]]
    assert len(fitted) == 9
    banded = [r for r in fitted if r["median_ci"] is not None]
    assert banded  # cells whose resamples all converged carry bands
    assert all(r["median_ci"]["lo"] <= r["median"] <= r["median_ci"]["hi"]
               for r in banded)
    header, body = read_csv(sweep_dir, "sweep.csv")
    assert header == ["date", "model", "quantile", "estimate", "lo", "hi"]
    assert len(body) == 18
    assert body[0][0] == "2020-01-27"  # epoch day 58


def test_bias_demo_sparse_cutoffs_are_reported_unfitted(lag_dir, tmp_path, capsys):
    out = str(tmp_path)
    code = cli.main(["bias-demo", "--in", os.path.join(lag_dir, "cohort.csv"),
                     "--from", "2020-01-23", "--to", "2020-02-18",
                     "--min-cases", "100000", "--out", out])
    assert code == 0
    assert "(0 fits)" in capsys.readouterr().out
    rows = read_json(out, "sweep.json")["rows"]
    assert len(rows) == 27 * 3
    assert all(not r["fitted"] and r["median"] is None for r in rows)


def test_bias_demo_reversed_range_exits_2(lag_dir, tmp_path):
    code = cli.main(["bias-demo", "--in", os.path.join(lag_dir, "cohort.csv"),
                     "--from", "60", "--to", "58", "--out", str(tmp_path)])
    assert code == 2


def test_gof_with_explicit_parameters(sim_dir, tmp_path, capsys):
    out = str(tmp_path)
    code = cli.main(["gof", "--in", os.path.join(sim_dir, "cohort.csv"),
                     "--growth-rate", "0.3", "--shape", "1.86", "--rate", "0.33",
                     "--out", out])
    assert code == 0
    assert "onset GOF" in capsys.readouterr().out
    payload = read_json(out, "gof.json")
    assert payload["fit"] == {"source": "flags"}
    assert 0.0 <= payload["gof"]["p_value"] <= 1.0
    assert payload["gof"]["dof"] == payload["gof"]["n_bins"] - 1


def test_gof_flag_combination_checked(sim_dir, tmp_path):
    code = cli.main(["gof", "--in", os.path.join(sim_dir, "cohort.csv"),
                     "--growth-rate", "0.3", "--out", str(tmp_path)])
    assert code == 2


def test_gof_too_few_residents_exits_4(tmp_path, capsys):
    rows = [{"case_id": f"r-{i}", "B_int": 0, "E_int": 53, "S_int": 50 + i}
            for i in range(5)]
    src = tmp_path / "tiny.json"
    src.write_text(json.dumps(rows))
    code = cli.main(["gof", "--in", str(src), "--growth-rate", "0.3",
                     "--shape", "1.86", "--rate", "0.33", "--out", str(tmp_path)])
    assert code == 4
    assert "resident" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# mcmc
# ---------------------------------------------------------------------------

def test_mcmc_artifacts(mcmc_dir):
    for name in ("draws_chain0.csv", "draws_chain1.csv",
                 "diagnostics.json", "mcmc_summary.json"):
        assert os.path.exists(os.path.join(mcmc_dir, name))
    header, body = read_csv(mcmc_dir, "draws_chain0.csv")
    assert header[0] == "draw" and "r1" in header and "h_all_0" in header
    assert len(header) == 1 + 4 + 30
    assert len(body) == (1200 - 600) // 10
    h_cols = [i for i, name in enumerate(header) if name.startswith("h_all_")]
    total = sum(float(body[0][i]) for i in h_cols)
    assert total == pytest.approx(1.0, abs=1e-9)

    diag = read_json(mcmc_dir, "diagnostics.json")
    assert set(diag["psrf"]) == {"r1", "doubling_time", "mean_incubation", "p_ge_14"}
    assert all(v is None for v in diag["psrf"].values())  # 60 draws < 100
    assert "psrf_notes" in diag

    summary = read_json(mcmc_dir, "mcmc_summary.json")
    assert summary["n_cases"] == 120 and summary["chains"] == 2
    assert summary["draws_per_chain"] == 60
    assert "p_ge_14" in summary["summaries"]
    entry = summary["summaries"]["doubling_time"]
    assert entry["lo"] <= entry["mean"] <= entry["hi"]


def test_mcmc_prior_only_needs_no_input(tmp_path):
    out = str(tmp_path)
    code = cli.main(["mcmc", "--prior-only", "--steps", "800", "--chains", "2",
                     "--seed", "6", "--out", out])
    assert code == 0
    summary = read_json(out, "mcmc_summary.json")
    assert summary["n_cases"] == 0


def test_mcmc_without_input_exits_2(tmp_path, capsys):
    code = cli.main(["mcmc", "--steps", "400", "--out", str(tmp_path)])
    assert code == 2
    assert "--prior-only" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# plot-data
# ---------------------------------------------------------------------------

def test_plot_data_onset_fit(sim_dir, tmp_path):
    out = str(tmp_path)
    code = cli.main(["plot-data", "--kind", "onset-fit",
                     "--in", os.path.join(sim_dir, "cohort.csv"),
                     "--growth-rate", "0.3", "--shape", "1.86", "--rate", "0.33",
                     "--out", out])
    assert code == 0
    header, body = read_csv(out, "onset_fit.csv")
    assert header == ["day", "date", "observed", "expected"]
    cohort = timeline.read_cohort_csv(os.path.join(sim_dir, "cohort.csv"))
    n_resident = sum(c.B == 0.0 for c in cohort)
    assert sum(int(r[2]) for r in body) == n_resident
    assert sum(float(r[3]) for r in body) == pytest.approx(n_resident, rel=1e-6)
    days = [int(r[0]) for r in body]
    assert days == list(range(days[0], days[-1] + 1))


def test_plot_data_sweep_bands(sweep_dir, tmp_path):
    out = str(tmp_path)
    code = cli.main(["plot-data", "--kind", "sweep-bands",
                     "--in", os.path.join(sweep_dir, "sweep.json"), "--out", out])
    assert code == 0
    header, body = read_csv(out, "sweep_bands.csv")
    assert len(body) == 18
    banded = [r for r in body if r[4] != ""]
    assert banded and all(float(r[4]) <= float(r[5]) for r in banded)


def test_plot_data_posterior_pmf(mcmc_dir, tmp_path):
    out = str(tmp_path)
    code = cli.main(["plot-data", "--kind", "posterior-pmf", "--in", mcmc_dir,
                     "--out", out])
    assert code == 0
    header, body = read_csv(out, "posterior_pmf.csv")
    assert header == ["stratum", "days", "mean", "lo", "hi"]
    assert [int(r[1]) for r in body] == list(range(30))
    assert all(r[0] == "all" for r in body)
    assert sum(float(r[2]) for r in body) == pytest.approx(1.0, abs=1e-9)


def test_plot_data_posterior_pmf_empty_dir_exits_2(tmp_path):
    code = cli.main(["plot-data", "--kind", "posterior-pmf",
                     "--in", str(tmp_path), "--out", str(tmp_path)])
    assert code == 2


def test_plot_data_se_density(sim_dir, tmp_path):
    out = str(tmp_path)
    code = cli.main(["plot-data", "--kind", "se-density",
                     "--in", os.path.join(sim_dir, "cohort.csv"),
                     "--strata", "none", "--out", out])
    assert code == 0
    header, body = read_csv(out, "se_density.csv")
    assert header == ["stratum", "x", "density"]
    assert all(r[0] == "all" for r in body)
    mass = 0.25 * sum(float(r[2]) for r in body)
    assert mass == pytest.approx(1.0, abs=0.05)


def test_plot_data_se_density_unlabeled_csv_pools_as_unknown(sim_dir, tmp_path):
    out = str(tmp_path)
    code = cli.main(["plot-data", "--kind", "se-density",
                     "--in", os.path.join(sim_dir, "cohort.csv"),
                     "--strata", "gender", "--out", out])
    assert code == 0
    _, body = read_csv(out, "se_density.csv")
    assert {r[0] for r in body} == {"unknown"}


def test_plot_data_se_density_without_labels_exits_3(tmp_path):
    rows = [{"case_id": f"a-{i}", "B_int": 0, "E_int": 53, "S_int": 50 + i}
            for i in range(4)]
    src = tmp_path / "cohort.json"
    src.write_text(json.dumps(rows))
    code = cli.main(["plot-data", "--kind", "se-density", "--in", str(src),
                     "--strata", "gender", "--out", str(tmp_path)])
    assert code == 3
