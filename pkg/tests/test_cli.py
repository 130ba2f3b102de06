import json
import math
import subprocess
import sys

import pytest

from quadgrad import cli
from quadgrad.branch import Branch

PI2 = math.pi ** 2


def write_config(tmp_path, obj, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj, indent=2))
    return path


def eigen_config(**problem):
    base = {"domain": {"type": "interval", "T": 1.0}, "n": 63}
    base.update(problem)
    return {"scenario": "eigen", "problem": base}


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def report(out):
    return json.loads((out / "report.json").read_text())


# ----------------------------------------------------------------------------
# configuration parsing


def test_minimal_config_gets_defaults(tmp_path):
    cfg = cli.parse_config(write_config(tmp_path, eigen_config()))
    assert cfg.problem["c"] == 1.0 and cfg.problem["h"] == 0.0 and cfg.problem["mu"] == 1.0
    assert cfg.params["operator"] == "gamma1"
    assert cfg.seed == 0 and cfg.tolerances == {}


def test_negative_n_names_field(tmp_path):
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config(write_config(tmp_path, eigen_config(n=-5)))
    assert info.value.field == "problem.n"


def test_unknown_key_named(tmp_path):
    raw = {"scenario": "solve", "problem": eigen_config()["problem"], "params": {"lamda": 1.0}}
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config(write_config(tmp_path, raw))
    assert "lamda" in str(info.value)


def test_malformed_json_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "scenario": "eigen",\n  "problem": {,\n}\n')
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config(path)
    assert "line 3" in str(info.value)


def test_missing_csv_reference(tmp_path):
    raw = eigen_config(h={"csv": "nowhere.csv"})
    with pytest.raises(cli.ConfigError):
        cli.parse_config(write_config(tmp_path, raw))


def test_eigen_reference_resolution(tmp_path):
    raw = {"scenario": "solve", "problem": eigen_config()["problem"],
           "params": {"lambda": {"gamma1": 0.5}}}
    cfg = cli.parse_config(write_config(tmp_path, raw))
    lam = cli.resolve(cfg.params["lambda"], cli.build_problem(cfg))
    assert lam == pytest.approx(0.5 * PI2, rel=1e-3)


@pytest.mark.parametrize("name", ["thm1", "thm2", "thm3", "thm4", "cash0", "surprise",
                                  "timemap-case1", "timemap-case2", "timemap-case3", "acceptance"])
def test_fixtures_validate(name):
    cfg = cli.parse_config(cli.fixture_path(name))
    assert cfg.scenario in cli.SCENARIOS


def test_unknown_fixture():
    with pytest.raises(cli.UsageError):
        cli.fixture_path("thm9")


# ----------------------------------------------------------------------------
# exit codes


def test_usage_errors(tmp_path, capsys):
    assert run_cli() == cli.EXIT_USAGE
    assert run_cli("frobnicate", "--config", "x.json") == cli.EXIT_USAGE
    assert run_cli("eigen") == cli.EXIT_USAGE
    assert run_cli("eigen", "--config", tmp_path / "absent.json") == cli.EXIT_USAGE
    assert run_cli("eigen", "--fixture", "nope") == cli.EXIT_USAGE


def test_validation_exit(tmp_path, capsys):
    path = write_config(tmp_path, eigen_config(n=-5))
    assert run_cli("eigen", "--config", path, "--out", tmp_path / "o") == cli.EXIT_VALIDATION
    assert "problem.n" in capsys.readouterr().err


def test_scenario_mismatch_is_validation_error(tmp_path):
    path = write_config(tmp_path, eigen_config())
    assert run_cli("solve", "--config", path) == cli.EXIT_VALIDATION


def test_solver_exit(tmp_path):
    raw = {"scenario": "solve", "problem": eigen_config(h=12.0)["problem"],
           "params": {"lambda": 0.0, "start": "upper"}}
    path = write_config(tmp_path, raw)
    assert run_cli("solve", "--config", path, "--out", tmp_path / "o") == cli.EXIT_SOLVER


def test_assertion_exit(tmp_path):
    raw = eigen_config()
    raw["params"] = {"expect": {"value": 11.0, "rel_tol": 1e-3}}
    out = tmp_path / "o"
    assert run_cli("eigen", "--config", write_config(tmp_path, raw), "--out", out) == cli.EXIT_ASSERTION
    rep = report(out)
    assert rep["exit_code"] == 4 and rep["outcomes"][0]["passed"] is False


# ----------------------------------------------------------------------------
# scenarios end to end


def test_eigen_run(tmp_path):
    raw = eigen_config()
    raw["params"] = {"expect": {"value": PI2, "rel_tol": 1e-3}}
    out = tmp_path / "o"
    assert run_cli("eigen", "--config", write_config(tmp_path, raw), "--out", out) == 0
    summary = json.loads((out / "eigen.json").read_text())
    assert summary["value"] == pytest.approx(PI2, rel=1e-3)
    assert (out / "eigenfunction.csv").read_text().startswith("index,x,value\n")
    assert "output_dir" not in report(out)["config"]


def test_outputs_byte_identical(tmp_path):
    raw = {"scenario": "solve", "problem": eigen_config(h=-1.0)["problem"],
           "params": {"lambda": 2.0, "second": True}}
    path = write_config(tmp_path, raw)
    for name in ("a", "b"):
        assert run_cli("solve", "--config", path, "--out", tmp_path / name) == 0
    for f in ("solve.json", "solution.csv", "second.csv", "report.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_solve_overrides(tmp_path):
    raw = {"scenario": "solve", "problem": eigen_config(h=-1.0)["problem"],
           "params": {"lambda": 1.0}}
    out = tmp_path / "o"
    code = run_cli("solve", "--config", write_config(tmp_path, raw), "--out", out,
                   "--lambda", 3.0, "--formulation", "transformed", "--seed", 7)
    assert code == 0
    rep = report(out)
    assert rep["config"]["params"]["lambda"] == 3.0 and rep["config"]["seed"] == 7
    assert rep["summary"]["report"]["formulation"] == "transformed"


def test_solve_from_file(tmp_path):
    first = tmp_path / "first"
    raw = {"scenario": "solve", "problem": eigen_config(h=-1.0)["problem"],
           "params": {"lambda": 1.0}}
    assert run_cli("solve", "--config", write_config(tmp_path, raw), "--out", first) == 0
    raw["params"].update(start="file", start_file="first/solution.csv")
    out = tmp_path / "again"
    assert run_cli("solve", "--config", write_config(tmp_path, raw, "b.json"), "--out", out) == 0
    assert report(out)["summary"]["report"]["iterations"] <= 1


def test_empty_branch_figure_header_only(tmp_path):
    cli.emit_figures_data(Branch("lambda"), tmp_path / "f.csv")
    assert (tmp_path / "f.csv").read_text() == "param,signed_sup\n"


@pytest.mark.slow
def test_thm1_fixture(tmp_path):
    out = tmp_path / "thm1"
    assert run_cli("branch", "--fixture", "thm1", "--out", out) == 0
    summary = json.loads((out / "summary.json").read_text())
    rows = (out / "figure.csv").read_text().splitlines()
    assert rows[0] == "param,signed_sup"
    last = float(rows[-1].split(",")[0])
    assert last == pytest.approx(summary["fold_estimate"], rel=1e-6)
    assert last < summary["gamma1"]


@pytest.mark.slow
def test_cash0_fixture(tmp_path):
    out = tmp_path / "cash0"
    assert run_cli("branch", "--fixture", "cash0", "--out", out) == 0
    zero = (out / "figure_zero.csv").read_text().splitlines()
    signed = (out / "figure_signed.csv").read_text().splitlines()
    assert zero[0] == signed[0] == "param,signed_sup"
    assert all(float(r.split(",")[1]) == 0.0 for r in zero[1:])
    vals = [float(r.split(",")[1]) for r in signed[1:]]
    assert vals[0] > 0 > vals[-1]


@pytest.mark.slow
@pytest.mark.parametrize("name", ["thm2", "thm3", "thm4"])
def test_branch_fixtures(name, tmp_path):
    assert run_cli("branch", "--fixture", name, "--out", tmp_path / name) == 0


@pytest.mark.slow
def test_surprise_fixture(tmp_path):
    out = tmp_path / "surprise"
    assert run_cli("solve", "--fixture", "surprise", "--out", out) == 0
    assert report(out)["summary"]["solutions"] == 0


@pytest.mark.parametrize("name", ["timemap-case1", "timemap-case2", "timemap-case3"])
def test_timemap_fixtures(name, tmp_path):
    out = tmp_path / name
    assert run_cli("timemap", "--fixture", name, "--out", out) == 0
    summary = json.loads((out / "timemap.json").read_text())
    assert (out / "solutions.csv").read_text().startswith("s,end_value,classification,turns\n")
    assert (out / "timemap_table.csv").read_text().startswith("a,T_plus\n")
    assert summary["counts"]["total"] >= 1


def test_timemap_reference_undefined(tmp_path):
    raw = {"scenario": "timemap", "params": {"lambda": 1.0, "h": -1.0, "T": {"T0": 0.5}}}
    path = write_config(tmp_path, raw)
    assert run_cli("timemap", "--config", path, "--out", tmp_path / "o") == cli.EXIT_SOLVER


def test_verify_suite_subset(tmp_path, capsys):
    raw = {"scenario": "verify_suite", "params": {"checks": ["AC1", "AC2"]}}
    out = tmp_path / "o"
    assert run_cli("verify_suite", "--config", write_config(tmp_path, raw), "--out", out) == 0
    text = capsys.readouterr().out
    assert "AC1 PASS" in text and "AC2 PASS" in text
    records = json.loads((out / "verify_suite.json").read_text())["checks"]
    assert [r["name"] for r in records] == ["AC1", "AC2"]


def test_console_script_version():
    res = subprocess.run([sys.executable, "-m", "quadgrad.cli", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("quadgrad ")
