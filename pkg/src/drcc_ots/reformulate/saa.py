"""Scenario models: sample average approximation and the infinity-Wasserstein ball."""
from __future__ import annotations

import math

import numpy as np

from ..case import GridCase, NetworkOperators
from ..errors import MalformedDocument
from ..milp.model import Affine, MilpModel
from ..two_stage import CcRow
from ..uncertainty import Polytope, ScenarioSet
from .problem import Problem, add_certain_row, build_backbone, linear_in_xi, row_is_certain


def violation_budget(S: int, eps: float) -> int:
    """Largest number of samples a row may violate: ``floor(S eps)``."""
    return int(math.floor(S * eps + 1e-9))


def scenario_support(samples: np.ndarray, margin: float = 0.0) -> Polytope:
    """Box hull of the samples; flat coordinates get a small pad so the box stays full-dimensional."""
    lo, hi = samples.min(axis=0), samples.max(axis=0)
    spread = hi - lo
    pad = np.where(spread > 0, margin * spread, 1e-6 * np.maximum(1.0, np.abs(hi)))
    return Polytope.box(lo - pad, hi + pad)


def add_scenario_block(model: MilpModel, row: CcRow, samples: np.ndarray, delta: float = 0.0) -> dict:
    """Rows ``delta ||a||_1 <= b - a.xi_j + M_j w_j`` with ``sum_j w_j <= floor(S eps)``.

    ``M_j`` is the largest left-hand violation over the variable bounds; samples
    that can never be violated get no row and no binary. With ``delta = 0``
    the norm term and its auxiliaries are omitted.
    """
    lb, ub = model.bounds()
    K = len(row.a)
    S = samples.shape[0]
    budget = violation_budget(S, row.eps)
    norm = Affine()
    norm_max = 0.0
    if delta > 0:
        amax = np.array([max(abs(v) for v in e.range(lb, ub)) for e in row.a])
        s = model.add_vars(f"s_{row.label}", K, 0.0, amax)
        for k, e in enumerate(row.a):
            if amax[k] == 0:
                continue
            model.add_constraint(Affine.var(s[k]) - e, ">=", 0.0, f"norm_pos_{row.label}[{k}]")
            model.add_constraint(Affine.var(s[k]) + e, ">=", 0.0, f"norm_neg_{row.label}[{k}]")
            norm.add_term(s[k], 1.0)
        norm_max = float(amax.sum())
        lb, ub = model.bounds()
    w_cols = []
    for j in range(S):
        slack = row.b - linear_in_xi(row, samples[j]) - norm * delta
        lo, _ = slack.range(lb, ub)
        big_m = -lo
        if big_m <= 0:
            continue
        if budget == 0:
            model.add_constraint(slack, ">=", 0.0, f"scen_{row.label}[{j}]")
            continue
        w = model.add_var(f"w_{row.label}[{j}]", 0.0, 1.0, binary=True)
        w_cols.append(w)
        model.add_constraint(slack + Affine.var(w, big_m), ">=", 0.0, f"scen_{row.label}[{j}]")
    if len(w_cols) > budget:
        model.add_row(w_cols, np.ones(len(w_cols)), "<=", budget, f"budget_{row.label}")
    return {"binaries": w_cols, "norm_bound": norm_max}


def _scenario_problem(method, case, ops, scenarios, eps, L_o, F, delta, support, eps_override, margin):
    base = case.base_mva
    samples = np.asarray(scenarios.samples, dtype=float) / base
    if support is None:
        support_pu = scenario_support(samples, margin)
    else:
        support_pu = support.scaled(1.0 / base)
    mean_sum = float(samples.mean(axis=0).sum())
    problem = build_backbone(method, case, ops, F, support_pu, L_o, mean_sum, eps, eps_override)
    n_bin = 0
    for row in problem.rows:
        if row_is_certain(problem.model, row):
            add_certain_row(problem.model, row)
            continue
        info = add_scenario_block(problem.model, row, samples, delta)
        n_bin += len(info["binaries"])
    problem.model.meta.update(samples=scenarios.S, scenario_binaries=n_bin, delta=delta)
    return problem


def build_saa(
    case: GridCase,
    ops: NetworkOperators,
    scenarios: ScenarioSet,
    eps: float,
    L_o: int,
    F,
    support: Polytope | None = None,
    eps_override: dict | None = None,
    margin: float = 0.0,
) -> Problem:
    """Chance rows enforced on all but ``floor(S eps)`` of the samples (MW scenarios)."""
    if not 0 < eps <= 0.5:
        raise MalformedDocument(f"eps must lie in (0, 0.5], got {eps}")
    return _scenario_problem("saa", case, ops, scenarios, eps, L_o, F, 0.0, support, eps_override, margin)


def build_wasserstein(
    case: GridCase,
    ops: NetworkOperators,
    scenarios: ScenarioSet,
    delta: float,
    eps: float,
    L_o: int,
    F,
    support: Polytope | None = None,
    eps_override: dict | None = None,
    margin: float = 0.0,
) -> Problem:
    """Chance rows robust to an infinity-Wasserstein ball of radius ``delta`` MW around the samples."""
    if delta < 0:
        raise MalformedDocument("Wasserstein radius must be nonnegative")
    if not 0 < eps <= 0.5:
        raise MalformedDocument(f"eps must lie in (0, 0.5], got {eps}")
    return _scenario_problem(
        "wass", case, ops, scenarios, eps, L_o, F, delta / case.base_mva, support, eps_override, margin
    )
