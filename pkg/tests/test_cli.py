import csv
import json

import numpy as np
import pytest

from drcc_ots.cli import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, main, parse_range
from drcc_ots.errors import MalformedDocument
from drcc_ots.synthetic import uniform_family, uniform_training


@pytest.fixture
def data(tmp_path):
    train = tmp_path / "train.csv"
    train.write_text(uniform_training(20, seed=0).to_csv())
    test = tmp_path / "test.csv"
    test.write_text(uniform_family([0.0], [10.0], 200, 1).to_csv())
    return tmp_path, train, test


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_version(capsys):
    code, out, _ = run(capsys, "--version")
    assert code == EXIT_OK and out.startswith("drcc-ots ")


def test_no_command_is_input_error(capsys):
    assert run(capsys)[0] == EXIT_INPUT


def test_solve_then_evaluate(capsys, data):
    tmp, train, test = data
    sol = tmp / "mad.json"
    code, out, _ = run(capsys, "solve", "--case", "case3", "--method", "mad", "--scenarios", train,
                       "--eps", 0.05, "--lo", 1, "--out", sol)
    assert code == EXIT_OK and "switching decision" in out
    assert sol.with_suffix(".log").exists()
    doc = json.loads(sol.read_text())
    assert doc["method"] == "mad" and doc["config"]["eps"] == 0.05
    code, out, _ = run(capsys, "evaluate", "--solution", sol, "--test", test, "--out-dir", tmp / "rep",
                       "--cross-check", 0.1)
    assert code == EXIT_OK
    report = json.loads((tmp / "rep" / "report.json").read_text())
    assert report["n_samples"] == 200 and report["cross_check_max_error"] < 1e-8
    rows = list(csv.reader((tmp / "rep" / "report.csv").open()))
    assert rows[1][0] == "mad"


def test_saa_training_rates_within_eps(capsys, data):
    tmp, train, _ = data
    sol = tmp / "saa.json"
    assert run(capsys, "solve", "--case", "case3", "--method", "saa", "--scenarios", train,
               "--eps", 0.1, "--lo", 1, "--out", sol)[0] == EXIT_OK
    assert run(capsys, "evaluate", "--solution", sol, "--test", train, "--out-dir", tmp / "r",
               "--no-curtailment")[0] == EXIT_OK
    report = json.loads((tmp / "r" / "report.json").read_text())
    assert report["max_row_violation_rate"] <= 0.1 + 1e-9
    assert report["curtailment_mean"] is None


def test_wasserstein_zero_radius_equals_saa(capsys, data):
    tmp, train, _ = data
    objs = []
    for method, extra in (("saa", []), ("wass", ["--radius", 0.0])):
        out = tmp / f"{method}.json"
        code, _, _ = run(capsys, "solve", "--case", "case3", "--method", method, "--scenarios", train,
                         "--eps", 0.1, "--lo", 1, "--gap-tol", 1e-6, "--out", out, *extra)
        assert code == EXIT_OK
        objs.append(json.loads(out.read_text())["objective"])
    assert objs[0] == pytest.approx(objs[1], rel=1e-6)


def test_case14_opened_lines_sorted(capsys, tmp_path):
    train = tmp_path / "t.csv"
    train.write_text(uniform_training(50, half_width=20.0, K=3, seed=5).to_csv())
    out = tmp_path / "s.json"
    code, _, _ = run(capsys, "solve", "--case", "case14", "--method", "mad", "--scenarios", train,
                     "--eps", 0.05, "--lo", 3, "--gap-tol", 1e-3, "--out", out)
    assert code == EXIT_OK
    opened = json.loads(out.read_text())["opened_lines"]
    assert opened == sorted(opened) and len(opened) <= 3


def test_gaussian_and_det_methods(capsys, data):
    tmp, train, _ = data
    for method in ("gauss", "det"):
        out = tmp / f"{method}.json"
        code, _, _ = run(capsys, "solve", "--case", "case3", "--method", method, "--scenarios", train,
                         "--eps", 0.05, "--lo", 1, "--out", out)
        assert code == EXIT_OK
        assert json.loads(out.read_text())["method"] == method


def test_wrong_wind_bus_count_is_input_error(capsys, data):
    tmp, train, _ = data
    code, _, err = run(capsys, "solve", "--case", "case3", "--method", "mad", "--scenarios", train,
                       "--wind-buses", "2,3", "--out", tmp / "x.json")
    assert code == EXIT_INPUT
    assert json.loads(err)["error"] == "DimensionMismatch"


def test_missing_file_is_input_error(capsys, tmp_path):
    code, _, err = run(capsys, "solve", "--case", "case3", "--method", "mad",
                       "--scenarios", tmp_path / "missing.csv", "--out", tmp_path / "x.json")
    assert code == EXIT_INPUT and json.loads(err)["exit_code"] == EXIT_INPUT


def test_evaluate_dimension_mismatch(capsys, data):
    tmp, train, _ = data
    sol = tmp / "m.json"
    run(capsys, "solve", "--case", "case3", "--method", "mad", "--scenarios", train, "--out", sol)
    wide = tmp / "wide.csv"
    wide.write_text("xi_1,xi_2\n1,2\n3,4\n")
    code, _, err = run(capsys, "evaluate", "--solution", sol, "--test", wide, "--out-dir", tmp / "r")
    assert code == EXIT_INPUT and json.loads(err)["error"] == "DimensionMismatch"


def test_infeasible_case_exit_code(capsys, tmp_path):
    doc = {
        "name": "short",
        "base_mva": 100.0,
        "slack_bus": 1,
        "buses": [{"id": 1}, {"id": 2}],
        "lines": [{"from": 1, "to": 2, "b": 10.0, "f_max": 100.0}],
        "generators": [{"bus": 1, "p_max": 50.0, "cost": 10.0}],
        "loads": {"2": 80.0},
    }
    path = tmp_path / "short.json"
    path.write_text(json.dumps(doc))
    code, _, err = run(capsys, "solve", "--case", path, "--method", "det", "--out", tmp_path / "x.json")
    assert code == EXIT_INFEASIBLE and json.loads(err)["exit_code"] == EXIT_INFEASIBLE


def test_curtail_subcommand(capsys, data):
    tmp, train, _ = data
    sol = tmp / "m.json"
    run(capsys, "solve", "--case", "case3", "--method", "mad", "--scenarios", train, "--out", sol)
    code, out, _ = run(capsys, "curtail", "--solution", sol, "--xi", "0")
    assert code == EXIT_OK
    assert json.loads(out)["scenarios"][0]["total"] == 0.0


def test_config_file_and_flag_precedence(capsys, data):
    tmp, train, _ = data
    cfg = tmp / "cfg.json"
    cfg.write_text(json.dumps({"case": "case3", "method": "mad", "scenarios": str(train), "eps": 0.3, "lo": 1}))
    out = tmp / "c.json"
    assert run(capsys, "solve", "--config", cfg, "--eps", 0.05, "--out", out)[0] == EXIT_OK
    assert json.loads(out.read_text())["config"]["eps"] == 0.05
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run(capsys, "solve", "--config", cfg, "--out", out)[0] == EXIT_INPUT


def test_sweep_cost_monotone(capsys, data):
    tmp, train, test = data
    code, _, _ = run(capsys, "sweep", "--case", "case3", "--method", "mad", "--scenarios", train,
                     "--sweep-eps", "0.05:0.1:0.25", "--sweep-lo", "0,1", "--test", test,
                     "--no-curtailment", "--out-dir", tmp / "sw")
    assert code == EXIT_OK
    rows = list(csv.DictReader((tmp / "sw" / "plotdata.csv").open()))
    assert len(rows) == 6
    for L_o in ("0", "1"):
        costs = [float(r["objective"]) for r in rows if r["L_o"] == L_o]
        assert all(b <= a + 1e-6 for a, b in zip(costs, costs[1:]))
    by_eps = {}
    for r in rows:
        by_eps.setdefault(r["eps"], []).append(float(r["objective"]))
    assert all(v[1] <= v[0] + 1e-6 for v in by_eps.values())


@pytest.mark.parametrize("text,values", [
    ("0.05:0.05:0.2", [0.05, 0.1, 0.15, 0.2]),
    ("0.1,0.3", [0.1, 0.3]),
    ("1:1:1", [1.0]),
])
def test_parse_range(text, values):
    np.testing.assert_allclose(parse_range(text), values)


@pytest.mark.parametrize("text", ["0:0:1", "a:b:c"])
def test_parse_range_rejects(text):
    with pytest.raises(MalformedDocument):
        parse_range(text)
