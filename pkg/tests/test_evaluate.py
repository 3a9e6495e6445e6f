import csv
import io
import json

import numpy as np
import pytest

from drcc_ots.errors import DimensionMismatch
from drcc_ots.evaluate import (
    CurtailmentSolver,
    curtailment,
    monte_carlo_curtailment,
    oos_evaluate,
    plotdata_csv,
)
from drcc_ots.reformulate import build_deterministic, build_mad, build_saa, solve
from drcc_ots.synthetic import uniform_family, uniform_training
from drcc_ots.uncertainty import MeanMad, ScenarioSet, box_support, moment_stats

GAP = {"gap_tol": 1e-6}


@pytest.fixture(scope="module")
def train():
    return uniform_training(60, seed=0)


@pytest.fixture(scope="module")
def mad_sol(case3, ops3, F3, train):
    amb = MeanMad(*moment_stats(train), box_support(train, 0.05))
    return solve(build_mad(case3, ops3, amb, 0.05, 1, F3), **GAP).solution


@pytest.fixture(scope="module")
def saa_train():
    return uniform_training(20, seed=0)


@pytest.fixture(scope="module")
def saa_sol(case3, ops3, F3, saa_train):
    return solve(build_saa(case3, ops3, saa_train, 0.1, 1, F3), **GAP).solution


def test_zero_scenarios_never_violate(mad_sol, case3):
    rep = oos_evaluate(mad_sol, ScenarioSet(np.zeros((10, 1))), case3)
    assert rep.average_violation_rate == rep.joint_violation_rate == 0.0
    assert rep.curtailment_mean == 0.0


def test_saa_in_sample_rates_within_eps(saa_sol, case3, saa_train):
    rep = oos_evaluate(saa_sol, saa_train, case3, with_curtailment=False)
    assert rep.max_row_violation_rate <= 0.1 + 1e-9
    assert len(rep.row_labels) == 24


def test_oos_cost_is_affine_in_mean(mad_sol, case3):
    arr = case3.arrays()
    test = ScenarioSet([[10.0], [-4.0], [0.0]])
    rep = oos_evaluate(mad_sol, test, case3, with_curtailment=False)
    expected = arr.cost @ mad_sol.g + arr.recourse_cost @ mad_sol.gamma * (2.0 / case3.base_mva)
    assert rep.oos_cost == pytest.approx(expected, rel=1e-12)


def test_evaluation_is_read_only(mad_sol, case3):
    before = mad_sol.to_json()
    oos_evaluate(mad_sol, uniform_family([0.0], [10.0], 200, 0), case3)
    assert mad_sol.to_json() == before


def test_permutation_invariance(mad_sol, case3):
    test = uniform_family([0.0], [20.0], 300, 2)
    perm = ScenarioSet(test.samples[np.random.default_rng(0).permutation(test.S)])
    a = oos_evaluate(mad_sol, test, case3)
    b = oos_evaluate(mad_sol, perm, case3)
    assert a.average_violation_rate == b.average_violation_rate
    assert a.oos_cost == pytest.approx(b.oos_cost, rel=1e-14)
    assert a.curtailment_mean == pytest.approx(b.curtailment_mean, rel=1e-12)


def test_duplicated_scenario_matches_single(mad_sol, case3):
    xi = [55.0]
    one = monte_carlo_curtailment(mad_sol, ScenarioSet([xi]), case3)
    many = monte_carlo_curtailment(mad_sol, ScenarioSet([xi] * 7), case3)
    assert many["mean"] == pytest.approx(one["mean"], rel=1e-12)
    assert many["stderr"] == pytest.approx(0.0, abs=1e-12)


def _closed_form_curtailment(sol, case, xi_mw):
    # One source: each limited quantity is base + y (xi - c); intersect the
    # admissible c intervals with [0, max(xi, 0)] and take the left end.
    arr = case.arrays()
    xi = xi_mw / case.base_mva
    Y = np.concatenate([sol.Y_theta[:, 0], sol.Y_f[:, 0]])
    base = np.concatenate([sol.theta, sol.f])
    lo = np.concatenate([arr.theta_min, -arr.f_max * sol.z])
    hi = np.concatenate([arr.theta_max, arr.f_max * sol.z])
    c_lo, c_hi = 0.0, max(xi, 0.0)
    for y, b0, l, h in zip(Y, base, lo, hi):
        if y == 0.0:
            continue
        e1, e2 = xi - (h - b0) / y, xi - (l - b0) / y
        c_lo, c_hi = max(c_lo, min(e1, e2)), min(c_hi, max(e1, e2))
    assert c_lo <= c_hi + 1e-9
    return c_lo * case.base_mva


def test_single_source_curtailment_closed_form(mad_sol, case3):
    solver = CurtailmentSolver(mad_sol, case3)
    saw_positive = False
    for xi in np.linspace(-60.0, 120.0, 37):
        if solver.feasible(np.array([xi / case3.base_mva])):
            oracle = 0.0
        else:
            oracle = _closed_form_curtailment(mad_sol, case3, xi)
        got = curtailment(mad_sol, xi, case3)[0]
        assert got == pytest.approx(oracle, abs=1e-6)
        saw_positive |= oracle > 1e-6
    assert saw_positive


def test_feasible_scenario_needs_no_curtailment(mad_sol, case3):
    assert curtailment(mad_sol, 0.0, case3)[0] == 0.0


def test_case14_monte_carlo_statistics(case14, ops14, F14):
    train = uniform_training(50, half_width=20.0, K=3, seed=5)
    amb = MeanMad(*moment_stats(train), box_support(train, 0.05))
    sol = solve(build_mad(case14, ops14, amb, 0.05, 1, F14), gap_tol=1e-4).solution
    test = uniform_family(amb.mu, 3 * amb.sigma, 5000, 1)
    mc = monte_carlo_curtailment(sol, test, case14)
    assert np.isfinite(mc["mean"]) and np.isfinite(mc["stderr"])
    assert 0.0 <= mc["mean"] and mc["stderr"] >= 0.0
    assert mc["infeasible"] + round(mc["summary"]["nonzero_fraction"] * (5000 - mc["infeasible"])) <= 5000


def test_cross_check_agrees(mad_sol, case3, ops3, F3):
    rep = oos_evaluate(mad_sol, uniform_family([0.0], [10.0], 100, 3), case3, ops3,
                       with_curtailment=False, F=F3, cross_check_fraction=0.2)
    assert rep.cross_check_max_error < 1e-8


def test_dimension_mismatch(mad_sol, case3):
    with pytest.raises(DimensionMismatch):
        oos_evaluate(mad_sol, ScenarioSet(np.zeros((3, 2))), case3)


def test_deterministic_solution_has_no_recourse(case3, ops3):
    det = solve(build_deterministic(case3, ops3, 0), **GAP).solution
    with pytest.raises(DimensionMismatch):
        oos_evaluate(det, ScenarioSet(np.zeros((3, 1))), case3)


def test_uncapped_curtailment_never_exceeds_capped(mad_sol, case3):
    test = uniform_family([20.0], [30.0], 200, 4)
    capped = monte_carlo_curtailment(mad_sol, test, case3)
    free = monte_carlo_curtailment(mad_sol, test, case3, paper_exact=True)
    assert free["mean"] <= capped["mean"] + 1e-9


def test_report_formats(mad_sol, case3):
    rep = oos_evaluate(mad_sol, uniform_family([0.0], [10.0], 50, 5), case3)
    doc = json.loads(rep.to_json())
    assert doc["schema_version"] == "1.0" and doc["n_samples"] == 50
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0][0] == "method" and len(rows) == 2 and len(rows[1]) == len(rows[0])
    per_row = list(csv.reader(io.StringIO(rep.rows_csv())))
    assert len(per_row) == 25


def test_plotdata_blank_cells():
    text = plotdata_csv([{"eps": 0.05, "L_o": 1, "objective": None, "status": "infeasible"}])
    assert text.splitlines()[1] == "0.05,1,,,,,infeasible"
