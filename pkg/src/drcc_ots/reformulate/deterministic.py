"""Deterministic big-M OTS."""
from __future__ import annotations

from ..case import GridCase, NetworkOperators
from ..milp.model import MilpModel
from ..two_stage import add_network, connectivity_cuts
from .problem import Problem


def build_deterministic(case: GridCase, ops: NetworkOperators, L_o: int) -> Problem:
    """Minimize ``c.g`` over dispatch and topology with at most ``L_o`` open lines."""
    model = MilpModel(name="det")
    layout = add_network(model, case, ops, L_o)
    model.meta.update(method="det", eps=None, L_o=L_o)
    problem = Problem("det", model, layout, case, ops)
    problem.callbacks.append(connectivity_cuts(case, layout))
    return problem
