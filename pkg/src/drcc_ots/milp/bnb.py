"""Branch-and-bound over the binary variables of a :class:`MilpModel`.

Node LPs are solved warm in a single :class:`~.lp.LpSession`. Search is
depth-first (plunging) until the first incumbent, then best-bound.
Branching picks the most fractional binary, ties broken by lowest index.
An ``on_incumbent`` callback may reject an integral LP point by returning
cuts; they are appended globally and the node is re-solved.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .lp import LpSession
from .model import MilpModel

logger = logging.getLogger(__name__)

INT_TOL = 1e-6

Cut = tuple  # (idx, coef, sense, rhs)


class MilpStatus(str, Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    NODE_LIMIT = "NodeLimit"


@dataclass
class MilpOptions:
    gap_tol: float = 1e-2
    node_limit: int = 200_000
    time_limit: float = float("inf")
    int_tol: float = INT_TOL


@dataclass
class MilpResult:
    status: MilpStatus
    x: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes: int
    wall_time: float
    cuts_added: int = 0
    callback_rounds: int = 0
    lp_iterations: int = 0
    bound_history: list = field(default_factory=list)
    incumbent_history: list = field(default_factory=list)

    @property
    def has_solution(self) -> bool:
        return self.x is not None


def relative_gap(incumbent: float, bound: float) -> float:
    if not np.isfinite(incumbent):
        return np.inf
    return max(0.0, (incumbent - bound) / max(1.0, abs(incumbent)))


@dataclass(order=True)
class _Node:
    key: tuple
    bound: float = field(compare=False)
    depth: int = field(compare=False)
    lo: np.ndarray = field(compare=False)
    hi: np.ndarray = field(compare=False)


def solve_milp(
    model: MilpModel,
    options: MilpOptions | None = None,
    on_incumbent: Callable[[np.ndarray], list | None] | None = None,
    **kwargs,
) -> MilpResult:
    """Solve ``model`` to within ``options.gap_tol`` relative gap.

    Keyword arguments override fields of ``options`` (``gap_tol``,
    ``node_limit``, ``time_limit``).
    """
    opts = options or MilpOptions()
    if kwargs:
        opts = MilpOptions(**{**opts.__dict__, **kwargs})
    start = time.perf_counter()
    bins = model.binary_indices()
    lb, ub = model.bounds()
    session = LpSession(model)
    counter = itertools.count()

    incumbent_x = None
    incumbent = np.inf
    nodes = 0
    cuts_added = 0
    rounds = 0
    bound_history: list[float] = []
    incumbent_history: list[float] = []
    best_bound_seen = -np.inf
    lp_iters = 0

    root = _Node((0,), -np.inf, 0, lb[bins].copy(), ub[bins].copy())
    open_nodes: list[_Node] = [root]
    plunging = True

    def prune_threshold():
        if not np.isfinite(incumbent):
            return np.inf
        return incumbent - max(opts.gap_tol * max(1.0, abs(incumbent)), 1e-9)

    def global_bound():
        if open_nodes:
            return min(n.bound for n in open_nodes)
        return incumbent

    status = None
    while open_nodes:
        if nodes >= opts.node_limit or time.perf_counter() - start > opts.time_limit:
            status = "limit"
            break
        if np.isfinite(incumbent):
            gb = global_bound()
            if relative_gap(incumbent, gb) <= opts.gap_tol:
                break
        node = heapq.heappop(open_nodes)
        if node.bound >= prune_threshold():
            continue
        nodes += 1
        session.set_bounds(bins, node.lo, node.hi)
        while True:
            res = session.solve()
            lp_iters += res.iterations
            if not res.optimal:
                break
            if res.objective >= prune_threshold():
                break
            xb = res.x[bins]
            frac = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
            if np.any(frac > opts.int_tol):
                break
            if on_incumbent is None:
                break
            cuts = on_incumbent(res.x)
            if not cuts:
                break
            rounds += 1
            cuts_added += len(cuts)
            session.add_rows(cuts)
            for idx, coef, sense, rhs in cuts:
                model.add_row(idx, coef, sense, rhs, name=f"cut{cuts_added}")
        if not res.optimal or res.objective >= prune_threshold():
            continue
        xb = res.x[bins]
        frac = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
        fractional = np.flatnonzero(frac > opts.int_tol)
        if fractional.size == 0:
            x = res.x.copy()
            x[bins] = np.round(xb)
            incumbent, incumbent_x = res.objective, x
            incumbent_history.append(incumbent)
            logger.debug("node %d: incumbent %.10g", nodes, incumbent)
            if plunging:
                plunging = False
                for n in open_nodes:
                    n.key = (n.bound, n.key[-1])
                heapq.heapify(open_nodes)
        else:
            # most fractional; argmax returns the lowest index on ties
            pos = int(fractional[np.argmax(frac[fractional])])
            value = xb[pos]
            children = []
            for direction in (0.0, 1.0):
                lo, hi = node.lo.copy(), node.hi.copy()
                lo[pos] = hi[pos] = direction
                children.append(_Node((0,), res.objective, node.depth + 1, lo, hi))
            # plunge toward the nearer integer first
            if value >= 0.5:
                children.reverse()
            for rank, child in enumerate(children):
                seq = next(counter)
                if plunging:
                    # deeper first; within a depth the preferred child first
                    child.key = (-child.depth, rank, seq)
                else:
                    child.key = (child.bound, seq)
                heapq.heappush(open_nodes, child)
        gb = global_bound() if open_nodes else incumbent
        best_bound_seen = max(best_bound_seen, gb if np.isfinite(gb) else best_bound_seen)
        bound_history.append(best_bound_seen)

    wall = time.perf_counter() - start
    bound = min(global_bound(), incumbent) if open_nodes else incumbent
    if incumbent_x is None:
        if status == "limit":
            mstatus = MilpStatus.NODE_LIMIT
        else:
            mstatus = MilpStatus.INFEASIBLE
        return MilpResult(mstatus, None, np.inf, global_bound() if open_nodes else np.inf, np.inf, nodes, wall,
                          cuts_added, rounds, lp_iters, bound_history, incumbent_history)
    bound = max(bound, best_bound_seen) if np.isfinite(best_bound_seen) else bound
    bound = min(bound, incumbent)
    gap = relative_gap(incumbent, bound)
    mstatus = MilpStatus.OPTIMAL if gap <= opts.gap_tol + 1e-12 else MilpStatus.FEASIBLE
    return MilpResult(mstatus, incumbent_x, incumbent, bound, gap, nodes, wall, cuts_added, rounds,
                      lp_iters, bound_history, incumbent_history)
