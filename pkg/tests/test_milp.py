import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from drcc_ots.milp import (
    Affine,
    LpSession,
    LpStatus,
    MilpModel,
    MilpOptions,
    MilpStatus,
    certify,
    parse_lp_text,
    relative_gap,
    solve_lp,
    solve_milp,
)
from drcc_ots.milp.simplex import dense_simplex
from drcc_ots.reformulate import build_deterministic, build_mad, solve
from drcc_ots.uncertainty import MeanMad, Polytope


def one_var_model(row_lo, row_hi):
    m = MilpModel()
    x = m.add_var("x", -10, 10, obj=1.0)
    m.add_row([x], [1.0], ">=", row_lo)
    m.add_row([x], [1.0], "<=", row_hi)
    return m


def test_lp_one_dimensional():
    res = solve_lp(one_var_model(1.0, 2.0))
    assert res.status is LpStatus.OPTIMAL
    assert res.x[0] == pytest.approx(1.0)


def test_lp_empty_box():
    assert solve_lp(one_var_model(2.0, 1.0)).status is LpStatus.INFEASIBLE


def test_lp_unbounded():
    m = MilpModel()
    m.add_var("x", -np.inf, 0.0, obj=1.0)
    assert solve_lp(m).status is LpStatus.UNBOUNDED


def test_dc_opf_on_triangle(case3, ops3):
    # With every line closed, transfers to the load at bus 3 use the direct
    # line for 2/3 (from bus 1) or 1/3 (from bus 2) of the power, so line (1,3)
    # gives 2 P1 + P2 <= 180. The cost 7500 - 40 P1 - 20 P2 is then minimized
    # on that face at 7500 - 20 * 180 = 3900.
    res = solve_lp(build_deterministic(case3, ops3, 0).model)
    assert res.optimal
    assert res.objective == pytest.approx(3900.0, rel=1e-8)
    cert = certify(build_deterministic(case3, ops3, 0).model, res)
    assert max(cert.values()) < 1e-7


@pytest.mark.parametrize("seed", range(5))
def test_dense_engine_matches_highs(seed):
    rng = np.random.default_rng(seed)
    m = MilpModel()
    xs = m.add_vars("x", 6, 0.0, 5.0)
    for k in xs:
        m.set_objective(k, rng.normal())
    for _ in range(4):
        m.add_row(xs, rng.normal(size=6), "<=", rng.uniform(1, 3))
    m.add_row(xs[:3], np.ones(3), "==", 2.0)
    a = solve_lp(m)
    b = solve_lp(m, engine="dense")
    assert a.status == b.status
    if a.optimal:
        assert a.objective == pytest.approx(b.objective, abs=1e-7)


def test_dense_simplex_degenerate():
    # several constraints meet at the optimum
    c = np.array([-1.0, -1.0])
    A = np.array([[1, 0], [0, 1], [1, 1], [2, 1], [1, 2]], float)
    b = np.array([1, 1, 2, 3, 3], float)
    status, x, obj, _ = dense_simplex(c, A, b, bounds=(np.zeros(2), np.full(2, np.inf)))
    assert status == "optimal" and obj == pytest.approx(-2.0)


def test_lp_text_roundtrip():
    m = MilpModel(name="toy")
    x = m.add_var("x", 0, 4, obj=1.5)
    y = m.add_var("y", 0, 1, binary=True, obj=-2.0)
    m.objective_constant = 3.0
    m.add_constraint(Affine({x: 1.0, y: 2.0}) + 1.0, "<=", 4.0, "c0")
    m.add_row([x, y], [1.0, -1.0], "==", 0.5, "c1")
    back = parse_lp_text(m.to_lp_text())
    assert back.to_lp_text() == m.to_lp_text()
    assert back.var_names == ["x", "y"] and back.binary == [False, True]


def test_model_check():
    m = MilpModel()
    m.add_var("x", 0, np.inf)
    with pytest.raises(ValueError):
        m.check()
    m = MilpModel()
    m.add_var("x", 0, 1)
    m.add_row([3], [1.0], "<=", 1.0)
    with pytest.raises(ValueError):
        m.check()


def test_affine_arithmetic():
    e = Affine({0: 2.0}, 1.0) - Affine.var(1) * 3.0 + 2.0
    assert e.value(np.array([1.0, 1.0])) == pytest.approx(2.0)
    assert e.range(np.array([0.0, 0.0]), np.array([1.0, 1.0])) == (0.0, 5.0)


def test_relative_gap():
    assert relative_gap(100.0, 99.0) == pytest.approx(0.01)
    assert relative_gap(np.inf, 0.0) == np.inf


def knapsack(values, weights, cap):
    m = MilpModel(name="knapsack")
    xs = [m.add_var(f"x{i}", 0, 1, binary=True, obj=-v) for i, v in enumerate(values)]
    m.add_row(xs, weights, "<=", cap)
    return m


def test_knapsack_matches_enumeration():
    values, weights, cap = [10, 13, 7, 8, 9], [5, 7, 3, 4, 6], 14
    best = max(sum(v for v, b in zip(values, bits) if b)
               for bits in itertools.product([0, 1], repeat=5)
               if sum(w for w, b in zip(weights, bits) if b) <= cap)
    res = solve_milp(knapsack(values, weights, cap), gap_tol=0.0)
    assert res.status is MilpStatus.OPTIMAL
    assert -res.objective == pytest.approx(best)


def test_fixed_binaries_single_node():
    m = knapsack([1, 2], [1, 1], 1)
    m.lb[0] = m.ub[0] = 1.0
    m.lb[1] = m.ub[1] = 0.0
    res = solve_milp(m)
    assert res.nodes == 1 and res.objective == pytest.approx(-1.0)


def random_milp(rng, n_bin):
    m = MilpModel()
    zs = m.add_vars("z", n_bin, 0, 1, binary=True)
    ys = m.add_vars("y", 3, 0.0, 10.0)
    for k in zs:
        m.set_objective(k, rng.normal())
    for k in ys:
        m.set_objective(k, rng.uniform(0.5, 2))
    for _ in range(4):
        m.add_row(np.concatenate([zs, ys]), np.concatenate([rng.normal(size=n_bin), rng.uniform(0.5, 1.5, 3)]),
                  ">=", rng.uniform(0, 3))
    return m, zs


def enumerate_milp(m, zs):
    c = m.objective_vector()
    A = m.matrix().toarray()
    lo, _ = m.row_bounds()
    best = np.inf
    for bits in itertools.product([0.0, 1.0], repeat=len(zs)):
        lb, ub = m.bounds()
        lb[zs] = ub[zs] = bits
        res = linprog(c, A_ub=-A, b_ub=-lo, bounds=list(zip(lb, ub)), method="highs")
        if res.status == 0:
            best = min(best, res.fun)
    return best


@pytest.mark.parametrize("seed,n_bin", [(0, 4), (1, 8), (2, 10), (3, 12)])
def test_random_milp_matches_enumeration(seed, n_bin):
    rng = np.random.default_rng(seed)
    m, zs = random_milp(rng, n_bin)
    oracle = enumerate_milp(m, zs)
    res = solve_milp(m, gap_tol=0.0)
    if np.isinf(oracle):
        assert res.status is MilpStatus.INFEASIBLE
    else:
        assert res.objective == pytest.approx(oracle, abs=1e-7)


def test_bound_and_incumbent_histories():
    rng = np.random.default_rng(7)
    m, _ = random_milp(rng, 12)
    res = solve_milp(m, gap_tol=0.0)
    assert np.all(np.diff(res.bound_history) >= -1e-9)
    assert np.all(np.diff(res.incumbent_history) <= 1e-9)


def test_incumbent_callback_cuts_apply():
    m = knapsack([5, 4, 3], [1, 1, 1], 3)
    seen = []

    def forbid_first(x):
        seen.append(x.copy())
        if x[0] > 0.5:
            return [([0], [1.0], "<=", 0.0)]
        return []

    res = solve_milp(m, gap_tol=0.0, on_incumbent=forbid_first)
    assert res.x[0] == pytest.approx(0.0)
    assert res.objective == pytest.approx(-7.0)
    assert res.cuts_added == 1


def test_node_limit():
    rng = np.random.default_rng(11)
    m, _ = random_milp(rng, 12)
    res = solve_milp(m, MilpOptions(gap_tol=0.0, node_limit=1))
    assert res.status in (MilpStatus.NODE_LIMIT, MilpStatus.FEASIBLE, MilpStatus.OPTIMAL)
    assert res.nodes <= 1


def _fixture_models(case3, ops3, case14, ops14, F3):
    amb = MeanMad([0.0], [10.0], Polytope.box([-40.0], [40.0]))
    for L_o in range(4):
        yield build_deterministic(case3, ops3, L_o).model
        yield build_deterministic(case14, ops14, L_o).model
        yield build_mad(case3, ops3, amb, 0.05, L_o, F3).model


def test_warm_start_after_cut(case3, ops3, case14, ops14, F3):
    wins = total = 0
    for model in _fixture_models(case3, ops3, case14, ops14, F3):
        session = LpSession(model)
        first = session.solve()
        if not first.optimal:
            continue
        c = model.objective_vector()
        nz = np.flatnonzero(c)
        cut = (nz, c[nz], ">=", first.objective + 1e-2 * max(1.0, abs(first.objective)))
        session.add_rows([cut])
        warm = session.solve()
        cold_model = model.copy()
        cold_model.add_row(*cut)
        cold = LpSession(cold_model).solve()
        assert warm.status == cold.status
        total += 1
        wins += warm.iterations < cold.iterations
    assert total >= 10
    assert wins >= 0.9 * total


def test_branch_and_bound_on_ots(case3, ops3):
    out = solve(build_deterministic(case3, ops3, 1), gap_tol=0.0)
    assert out.result.status is MilpStatus.OPTIMAL
    assert out.result.objective < 3900.0
