"""Assembled problems, the shared two-stage backbone and solutions."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..case import GridCase, NetworkOperators
from ..errors import MalformedDocument
from ..milp.bnb import MilpOptions, MilpResult, MilpStatus, solve_milp
from ..milp.model import Affine, MilpModel
from ..two_stage import (
    CcRow,
    Layout,
    add_network,
    balance_equality_block,
    cc_row_set,
    combine_callbacks,
    connectivity_cuts,
    flow_dual_blocks,
)
from ..uncertainty import Polytope

logger = logging.getLogger(__name__)

SOLUTION_SCHEMA_VERSION = "1.0"


@dataclass
class Problem:
    """A model ready for :func:`solve` plus what is needed to read its solution."""

    method: str
    model: MilpModel
    layout: Layout
    case: GridCase
    ops: NetworkOperators
    rows: list[CcRow] = field(default_factory=list)
    F: np.ndarray | None = None
    support: Polytope | None = None  # per-unit
    mean_sum: float = 0.0  # 1^T mu in per-unit, used by the recourse cost
    callbacks: list[Callable] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def build_backbone(
    method: str,
    case: GridCase,
    ops: NetworkOperators,
    F: np.ndarray,
    support: Polytope,
    L_o: int,
    mean_sum: float,
    eps: float,
    eps_override: dict | None = None,
) -> Problem:
    """Two-stage model without chance rows: network, recourse balance, dualized flow rows, cost."""
    F = np.asarray(F, dtype=float)
    if F.shape != (case.n_bus, support.K):
        raise MalformedDocument(f"placement matrix shape {F.shape} does not match N={case.n_bus}, K={support.K}")
    model = MilpModel(name=method)
    layout = add_network(model, case, ops, L_o, K=F.shape[1])
    balance_equality_block(model, layout, ops.A, F)
    flow_dual_blocks(model, layout, case, ops, support)
    arr = case.arrays()
    for n in range(case.n_bus):
        model.set_objective(layout.gamma[n], arr.recourse_cost[n] * mean_sum)
    rows = cc_row_set(case, layout, eps, eps_override)
    model.meta.update(method=method, eps=eps, L_o=L_o)
    problem = Problem(method, model, layout, case, ops, rows, F, support, mean_sum)
    problem.callbacks.append(connectivity_cuts(case, layout))
    return problem


def row_is_certain(model: MilpModel, row: CcRow) -> bool:
    lb, ub = model.bounds()
    return all(e.is_zero(lb, ub) for e in row.a)


def add_certain_row(model: MilpModel, row: CcRow) -> None:
    """A row with ``a(x) = 0`` holds for every ``xi`` iff ``b(x) >= 0``."""
    lb, ub = model.bounds()
    lo, _ = row.b.range(lb, ub)
    if lo < 0:
        model.add_constraint(row.b, ">=", 0.0, f"certain_{row.label}")


def linear_in_xi(row: CcRow, xi) -> Affine:
    """``a(x).xi`` as an affine expression of the decisions."""
    out = Affine()
    for e, v in zip(row.a, np.asarray(xi, dtype=float)):
        if v != 0.0:
            out = out + e * v
    return out


@dataclass
class Solution:
    """First-stage decisions, recourse maps (per-unit) and solve diagnostics."""

    method: str
    g: np.ndarray
    theta: np.ndarray
    f: np.ndarray
    z: np.ndarray
    gamma: np.ndarray | None
    Y_theta: np.ndarray | None
    Y_f: np.ndarray | None
    objective: float
    status: str
    base_mva: float = 100.0
    eps: float | None = None
    L_o: int = 0
    mean_sum: float = 0.0
    diagnostics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return 0 if self.Y_f is None else self.Y_f.shape[1]

    @property
    def opened_lines(self) -> list[int]:
        """1-based indices of open lines, ascending."""
        return [int(k) + 1 for k in np.flatnonzero(self.z < 0.5)]

    def packed(self):
        """Decision vector and a matching :class:`Layout` for evaluating :class:`CcRow` objects."""
        N, L, K = self.g.size, self.f.size, self.K
        pos = 0

        def take(shape):
            nonlocal pos
            size = int(np.prod(shape))
            out = np.arange(pos, pos + size).reshape(shape)
            pos += size
            return out

        layout = Layout(g=take(N), theta=take(N), f=take(L), z=take(L))
        parts = [self.g, self.theta, self.f, self.z]
        if K:
            layout.gamma, layout.Y_theta, layout.Y_f = take(N), take((N, K)), take((L, K))
            parts += [self.gamma, self.Y_theta.ravel(), self.Y_f.ravel()]
        return layout, np.concatenate(parts)

    def to_dict(self) -> dict:
        def arr(v):
            return None if v is None else np.asarray(v).tolist()

        return {
            "schema_version": SOLUTION_SCHEMA_VERSION,
            "method": self.method,
            "status": self.status,
            "objective": self.objective,
            "units": "per-unit",
            "base_mva": self.base_mva,
            "eps": self.eps,
            "L_o": self.L_o,
            "mean_sum": self.mean_sum,
            "opened_lines": self.opened_lines,
            "g": arr(self.g),
            "theta": arr(self.theta),
            "f": arr(self.f),
            "z": arr(self.z),
            "gamma": arr(self.gamma),
            "Y_theta": arr(self.Y_theta),
            "Y_f": arr(self.Y_f),
            "diagnostics": self.diagnostics,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> Solution:
        def arr(key, ndim=1):
            v = doc.get(key)
            if v is None:
                return None
            out = np.asarray(v, dtype=float)
            return out.reshape(out.shape[0], -1) if ndim == 2 else out

        try:
            return cls(
                method=doc["method"],
                g=arr("g"),
                theta=arr("theta"),
                f=arr("f"),
                z=arr("z"),
                gamma=arr("gamma"),
                Y_theta=arr("Y_theta", 2),
                Y_f=arr("Y_f", 2),
                objective=float(doc["objective"]),
                status=doc["status"],
                base_mva=float(doc.get("base_mva", 100.0)),
                eps=doc.get("eps"),
                L_o=int(doc.get("L_o", 0)),
                mean_sum=float(doc.get("mean_sum", 0.0)),
                diagnostics=doc.get("diagnostics", {}),
                config=doc.get("config", {}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocument(f"invalid solution document: {exc}") from None


def load_solution(path) -> Solution:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"solution file is not JSON: {exc}") from None
    return Solution.from_dict(doc)


def extract_solution(problem: Problem, x: np.ndarray, result: MilpResult | None = None) -> Solution:
    lay = problem.layout
    K = lay.K
    diag = {}
    status = "Optimal"
    objective = problem.model.objective_value(x)
    if result is not None:
        status = result.status.value
        diag = {
            "nodes": result.nodes,
            "bound": result.bound,
            "gap": result.gap,
            "cuts_added": result.cuts_added,
            "callback_rounds": result.callback_rounds,
            "lp_iterations": result.lp_iterations,
        }
        objective = result.objective
    return Solution(
        method=problem.method,
        g=x[lay.g].copy(),
        theta=x[lay.theta].copy(),
        f=x[lay.f].copy(),
        z=np.round(x[lay.z]),
        gamma=x[lay.gamma].copy() if K else None,
        Y_theta=x[lay.Y_theta].copy() if K else None,
        Y_f=x[lay.Y_f].copy() if K else None,
        objective=float(objective),
        status=status,
        base_mva=problem.case.base_mva,
        eps=problem.model.meta.get("eps"),
        L_o=int(problem.model.meta.get("L_o", 0)),
        mean_sum=problem.mean_sum,
        diagnostics=diag,
    )


@dataclass
class SolveOutcome:
    solution: Solution | None
    result: MilpResult


def solve(problem: Problem, options: MilpOptions | None = None, **kwargs) -> SolveOutcome:
    """Run branch-and-bound with the problem's incumbent callbacks."""
    problem.model.check()
    callback = combine_callbacks(*problem.callbacks) if problem.callbacks else None
    result = solve_milp(problem.model, options, on_incumbent=callback, **kwargs)
    logger.info(
        "%s: status %s objective %.6g nodes %d wall %.3fs",
        problem.method, result.status.value, result.objective, result.nodes, result.wall_time,
    )
    if not result.has_solution:
        return SolveOutcome(None, result)
    return SolveOutcome(extract_solution(problem, result.x, result), result)


def is_success(result: MilpResult) -> bool:
    return result.status in (MilpStatus.OPTIMAL, MilpStatus.FEASIBLE)
