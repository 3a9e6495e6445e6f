"""Block coordinate descent for chance rows under a mixture of mean-MAD sets.

The exact mixture reformulation multiplies each mode's branch multiplier
``lambda_j`` with ``a(x)`` and ``b(x)``. The loop alternates between fixing
``x`` (per row and mode, a small worst-case LP yields ``lambda_j``) and fixing
every ``lambda_j`` (one MILP in ``x`` and the remaining duals). A fixed
``lambda`` restricts the feasible set and the previous iterate stays feasible,
so the objective sequence never increases beyond solver tolerance.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..case import GridCase, NetworkOperators
from ..errors import MalformedDocument, NoFeasibleStart
from ..milp.bnb import MilpOptions
from ..two_stage import row_values
from ..uncertainty import MeanMad, MultiMad, Polytope
from .mad import add_mixture_block, build_mad, worst_case_lp, worst_case_probability
from .problem import Problem, Solution, add_certain_row, build_backbone, is_success, row_is_certain, solve

logger = logging.getLogger(__name__)

LAMBDA_FLOOR = 1e-9
ROBUST_TOL = 1e-7
FEAS_SLACK = 1e-6


@dataclass
class BcdState:
    solution: Solution
    lambdas: dict  # row label -> multiplier per mode
    history: list = field(default_factory=list)
    omega: float = 1e-2
    t_max: int = 20
    iterations: int = 0
    converged: bool = False
    capped: bool = False
    start: str = "pooled"


def union_box(modes) -> Polytope:
    lows, highs = zip(*(md.support.coordinate_bounds() for md in modes))
    return Polytope.box(np.min(lows, axis=0), np.max(highs, axis=0))


def envelope(spec: MultiMad) -> MeanMad:
    """A single mean-MAD set containing the whole mixture set.

    ``E|xi - mu| <= sum_j p_j (sigma_j + |mu_j - mu|)`` by the triangle
    inequality, and every mode lives inside the union box.
    """
    mu = spec.mean()
    sigma = sum(pj * (md.sigma + np.abs(md.mu - mu)) for pj, md in zip(spec.p, spec.modes))
    return MeanMad(mu, sigma, union_box(spec.modes))


def mixture_probability(a, b, spec: MultiMad) -> float:
    """``inf P(a.xi <= b)`` over the mixture set (the infimum splits by mode)."""
    return float(sum(pj * worst_case_probability(a, b, md.mu, md.sigma, md.support)
                     for pj, md in zip(spec.p, spec.modes)))


def mixture_feasible(problem: Problem, x, spec_pu: MultiMad) -> bool:
    a, b = row_values(problem.rows, x)
    for r, row in enumerate(problem.rows):
        if not np.any(a[r]):
            if b[r] < -FEAS_SLACK:
                return False
            continue
        if mixture_probability(a[r], b[r], spec_pu) < 1.0 - row.eps - FEAS_SLACK:
            return False
    return True


def _quantify(args):
    """Branch multiplier for one row and mode: ``inf`` when the row holds on the
    whole support with (almost) no slack, where no finite multiplier certifies it."""
    a, b, md = args
    reach = md.support.support_value(a)
    if b >= reach - ROBUST_TOL * max(1.0, abs(b)) and b - reach <= ROBUST_TOL * max(1.0, abs(b)):
        return np.inf
    if b > reach:
        _, lam = worst_case_lp(a, b, md.mu, md.sigma, md.support)
        return lam if lam > LAMBDA_FLOOR else np.inf
    value, lam = worst_case_lp(a, b, md.mu, md.sigma, md.support)
    return lam if value > 0 else 0.0


def quantify(rows, x, spec_pu: MultiMad, threads: int = 1) -> dict:
    """Per row and mode, the branch multiplier of the worst-case LP at fixed ``x``."""
    a, b = row_values(rows, x)
    jobs = [(a[r], b[r], md) for r in range(len(rows)) for md in spec_pu.modes]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            lams = list(pool.map(_quantify, jobs))
    else:
        lams = [_quantify(j) for j in jobs]
    m = spec_pu.m
    return {row.label: np.array(lams[r * m:(r + 1) * m]) for r, row in enumerate(rows)}


def build_mixture_step(case, ops, spec_pu: MultiMad, eps, L_o, F, lambdas: dict, eps_override=None) -> Problem:
    support = union_box(spec_pu.modes)
    problem = build_backbone("mad-multi", case, ops, F, support, L_o, float(spec_pu.mean().sum()), eps, eps_override)
    for row in problem.rows:
        if row_is_certain(problem.model, row):
            add_certain_row(problem.model, row)
        else:
            add_mixture_block(problem.model, row, spec_pu.modes, spec_pu.p, lambdas[row.label])
    return problem


def solve_multimodal_bcd(
    case: GridCase,
    ops: NetworkOperators,
    spec: MultiMad,
    eps: float,
    L_o: int,
    F,
    omega: float = 1e-2,
    t_max: int = 20,
    pooled: MeanMad | None = None,
    options: MilpOptions | None = None,
    eps_override: dict | None = None,
    threads: int = 1,
) -> BcdState:
    """Run the alternating scheme from the pooled unimodal optimum (MW inputs).

    When ``pooled`` is omitted, or its optimum is not feasible for the mixture
    set, the start is the optimum over :func:`envelope`, which always is.
    Returns the best iterate; ``capped`` flags that ``t_max`` was reached
    before two objectives came within ``omega``.
    """
    if not 0 < eps <= 0.5:
        raise MalformedDocument(f"eps must lie in (0, 0.5], got {eps}")
    options = options or MilpOptions(gap_tol=1e-6)
    base = case.base_mva
    spec_pu = spec.scaled(1.0 / base)

    start = None
    label = "pooled"
    if pooled is not None:
        prob0 = build_mad(case, ops, pooled, eps, L_o, F, eps_override)
        out0 = solve(prob0, options)
        if is_success(out0.result) and mixture_feasible(prob0, out0.result.x, spec_pu):
            start = (prob0, out0)
    if start is None:
        label = "envelope"
        prob0 = build_mad(case, ops, envelope(spec), eps, L_o, F, eps_override)
        out0 = solve(prob0, options)
        if not is_success(out0.result):
            raise NoFeasibleStart("the unimodal model has no feasible solution")
        start = (prob0, out0)

    prob, out = start
    best = out.solution
    history = [out.result.objective]
    lambdas = quantify(prob.rows, out.result.x, spec_pu, threads)
    state = BcdState(best, lambdas, history, omega, t_max, start=label)
    x_prev, rows_prev = out.result.x, prob.rows
    for t in range(1, t_max + 1):
        state.iterations = t
        lambdas = quantify(rows_prev, x_prev, spec_pu, threads)
        step = build_mixture_step(case, ops, spec_pu, eps, L_o, F, lambdas, eps_override)
        res = solve(step, options)
        if not is_success(res.result):
            logger.warning("BCD step %d found no solution; keeping the previous iterate", t)
            break
        f_t = res.result.objective
        history.append(f_t)
        logger.info("BCD iteration %d: objective %.8g", t, f_t)
        if f_t < best.objective:
            best = res.solution
            state.lambdas = lambdas
        x_prev, rows_prev = res.result.x, step.rows
        if abs(f_t - history[-2]) < omega:
            state.converged = True
            break
    state.capped = not state.converged
    best.method = "mad-multi"
    best.diagnostics = dict(best.diagnostics, bcd_iterations=state.iterations, bcd_history=list(history),
                            bcd_converged=state.converged, bcd_start=label)
    state.solution = best
    state.history = history
    return state
