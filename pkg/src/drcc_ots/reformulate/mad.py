"""Mean / mean-absolute-deviation ambiguity: worst-case probability and the dual row block.

The worst case of ``P(a.xi <= b)`` over distributions on ``{U xi <= t}``
with mean ``mu`` and ``E|xi - mu| <= sigma`` is the value of

    max  alpha + beta.mu - kappa.sigma
    s.t. 1{a.xi <= b} >= alpha + beta.xi - kappa.|xi - mu|   for all xi,

whose two indicator branches are dualized over the support. The branch
where the row fails uses the closed set ``a.xi >= b``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..case import GridCase, NetworkOperators
from ..errors import MalformedDocument, MeanOutsideSupport, NumericalBreakdown, UnboundedDual
from ..milp.lp import LpStatus, solve_lp
from ..milp.model import Affine, MilpModel
from ..two_stage import DUAL_BOUND, CcRow
from ..uncertainty import MeanMad, Polytope
from .problem import Problem, add_certain_row, build_backbone, row_is_certain

INF = float("inf")


@dataclass
class MadDualBlock:
    alpha: int
    beta: np.ndarray
    kappa: np.ndarray
    lam: int | None
    pi1: np.ndarray
    tau1: np.ndarray
    psi1: np.ndarray
    pi2: np.ndarray
    tau2: np.ndarray
    psi2: np.ndarray


def _add_branch(model, tag, alpha, beta, kappa, mu, U, t, bound, rhs_expr: Affine, a_terms):
    """One dualized branch: ``alpha + (pi - tau).mu + psi.t <= rhs`` with
    ``beta + a + tau = pi + U^T psi`` and ``pi + tau = kappa``.
    """
    K, W = mu.size, t.size
    pi = model.add_vars(f"pi{tag}", K, 0.0, bound)
    tau = model.add_vars(f"tau{tag}", K, 0.0, bound)
    psi = model.add_vars(f"psi{tag}", W, 0.0, bound)
    lhs = Affine.var(alpha)
    for k in range(K):
        lhs.add_term(pi[k], mu[k])
        lhs.add_term(tau[k], -mu[k])
    for w in range(W):
        lhs.add_term(psi[w], t[w])
    model.add_constraint(lhs - rhs_expr, "<=", 0.0, f"mad_value{tag}")
    for k in range(K):
        expr = Affine({beta[k]: 1.0, tau[k]: 1.0, pi[k]: -1.0})
        for w in np.flatnonzero(U[:, k]):
            expr.add_term(psi[w], -U[w, k])
        if a_terms is not None:
            expr = expr + a_terms[k]
        model.add_constraint(expr, "==", 0.0, f"mad_slope{tag}[{k}]")
        model.add_row([pi[k], tau[k], kappa[k]], [1.0, 1.0, -1.0], "==", 0.0, f"mad_split{tag}[{k}]")
    return pi, tau, psi


def add_mad_block(
    model: MilpModel, row: CcRow, mu, sigma, support: Polytope, bound: float = DUAL_BOUND
) -> MadDualBlock:
    """Linear rows equivalent to the worst-case chance constraint of ``row`` (scaled dual form)."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    K = mu.size
    tag = f"_{row.label}"
    alpha = model.add_var(f"alpha{tag}", -bound, bound)
    beta = model.add_vars(f"beta{tag}", K, -bound, bound)
    kappa = model.add_vars(f"kappa{tag}", K, 0.0, bound)
    lam = model.add_var(f"lambda{tag}", 0.0, bound)
    expr = Affine.var(alpha) + Affine.var(lam, -(1.0 - row.eps))
    for k in range(K):
        expr.add_term(beta[k], mu[k])
        expr.add_term(kappa[k], -sigma[k])
    model.add_constraint(expr, ">=", 0.0, f"mad_level{tag}")
    pi1, tau1, psi1 = _add_branch(model, f"1{tag}", alpha, beta, kappa, mu, support.U, support.t, bound,
                                  Affine.var(lam), None)
    pi2, tau2, psi2 = _add_branch(model, f"2{tag}", alpha, beta, kappa, mu, support.U, support.t, bound,
                                  row.b, row.a)
    return MadDualBlock(alpha, beta, kappa, lam, pi1, tau1, psi1, pi2, tau2, psi2)


def add_mixture_block(model: MilpModel, row: CcRow, modes, p, lambdas, bound: float = DUAL_BOUND) -> list:
    """Mixture worst case with the branch-2 multipliers ``lambdas`` held fixed (one per mode).

    Mode ``j`` uses duals scaled by ``lambda_j``, so branch 1 has the constant
    rhs ``1 / lambda_j`` and its value enters the coupling row with weight
    ``p_j lambda_j``. ``lambda_j = inf`` asks for the row to hold on the whole
    mode support (value 1); ``lambda_j = 0`` drops the mode (value 0).
    """
    K = len(row.a)
    coupling = Affine()
    credit = 0.0
    blocks = []
    for j, (md, lam) in enumerate(zip(modes, lambdas)):
        if lam <= 0:
            blocks.append(None)
            continue
        tag = f"_{row.label}_m{j}"
        alpha = model.add_var(f"alpha{tag}", -bound, bound)
        beta = model.add_vars(f"beta{tag}", K, -bound, bound)
        kappa = model.add_vars(f"kappa{tag}", K, 0.0, bound)
        robust = not np.isfinite(lam)
        _add_branch(model, f"1{tag}", alpha, beta, kappa, md.mu, md.support.U, md.support.t, bound,
                    Affine.constant(0.0 if robust else 1.0 / lam), None)
        _add_branch(model, f"2{tag}", alpha, beta, kappa, md.mu, md.support.U, md.support.t, bound,
                    row.b, row.a)
        value = Affine.var(alpha)
        for k in range(K):
            value.add_term(beta[k], md.mu[k])
            value.add_term(kappa[k], -md.sigma[k])
        if robust:
            model.add_constraint(value, ">=", 0.0, f"mixture_robust{tag}")
            credit += p[j]
        else:
            coupling = coupling + value * (p[j] * lam)
        blocks.append((alpha, beta, kappa))
    if coupling.terms or 1.0 - row.eps - credit > 0:
        model.add_constraint(coupling, ">=", 1.0 - row.eps - credit, f"mixture_level_{row.label}")
    return blocks


def _check_interior(mu, support: Polytope):
    if support.interior_margin(mu) <= 0:
        raise MeanOutsideSupport("mean must lie strictly inside the support")


def worst_case_lp(a, b, mu, sigma, support: Polytope):
    """Solve the worst-case probability dual at fixed ``(a, b)``.

    Returns ``(value, lam)`` where ``lam`` is the branch-2 multiplier.
    """
    a = np.asarray(a, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    K = mu.size
    model = MilpModel(name="worst_case")
    alpha = model.add_var("alpha", -INF, INF)
    beta = model.add_vars("beta", K, -INF, INF)
    kappa = model.add_vars("kappa", K, 0.0, INF)
    lam = model.add_var("lambda", 0.0, INF)
    model.set_objective(alpha, -1.0)
    for k in range(K):
        model.set_objective(beta[k], -mu[k])
        model.set_objective(kappa[k], sigma[k])
    _add_branch(model, "1", alpha, beta, kappa, mu, support.U, support.t, INF, Affine.constant(1.0), None)
    _add_branch(model, "2", alpha, beta, kappa, mu, support.U, support.t, INF,
                Affine.var(lam, b), [Affine.var(lam, a[k]) for k in range(K)])
    res = solve_lp(model)
    if res.status is LpStatus.UNBOUNDED:
        raise UnboundedDual("worst-case dual is unbounded; is the mean interior and the support bounded?")
    if not res.optimal:
        raise NumericalBreakdown(f"worst-case dual returned {res.status.value}")
    return -res.objective, float(res.x[lam])


def worst_case_probability(a, b, mu, sigma, support: Polytope) -> float:
    """``inf P(a.xi <= b)`` over the mean-MAD ambiguity set on ``support``."""
    a = np.asarray(a, dtype=float)
    _check_interior(np.asarray(mu, dtype=float), support)
    if b >= support.support_value(a):
        return 1.0
    if b < -support.support_value(-a):
        return 0.0
    value, _ = worst_case_lp(a, b, mu, sigma, support)
    return float(min(1.0, max(0.0, value)))


def build_mad(
    case: GridCase,
    ops: NetworkOperators,
    ambiguity: MeanMad,
    eps: float,
    L_o: int,
    F,
    eps_override: dict | None = None,
) -> Problem:
    """Distributionally robust chance rows under the mean-MAD set (``ambiguity`` in MW)."""
    # eps = 0 is admitted here: the block then enforces the row on the whole support
    if not 0 <= eps <= 0.5:
        raise MalformedDocument(f"eps must lie in [0, 0.5], got {eps}")
    amb = ambiguity.scaled(1.0 / case.base_mva)
    problem = build_backbone("mad", case, ops, F, amb.support, L_o, float(amb.mu.sum()), eps, eps_override)
    for row in problem.rows:
        if row_is_certain(problem.model, row):
            add_certain_row(problem.model, row)
        else:
            add_mad_block(problem.model, row, amb.mu, amb.sigma, amb.support)
    return problem
