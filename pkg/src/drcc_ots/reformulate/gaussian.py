"""Gaussian chance rows handled by supporting-hyperplane cuts on the second-order cone.

A row holds with probability ``1 - eps`` under ``N(mu, Sigma)`` iff
``mu.a + z ||Sigma^(1/2) a||_2 <= b`` with ``z = Phi^-1(1 - eps)``. The model
starts from the mean rows ``mu.a <= b`` and an incumbent callback adds the
tangent ``mu.a + z (Sigma a*).a / ||Sigma^(1/2) a*|| <= b`` at every row the
candidate ``a*`` violates.
"""
from __future__ import annotations

import numpy as np
from scipy.stats import norm

from ..case import GridCase, NetworkOperators
from ..errors import QuantileDomain
from ..two_stage import CcRow, row_values
from ..uncertainty import Gaussian, Polytope
from .problem import Problem, add_certain_row, build_backbone, linear_in_xi, row_is_certain

SOC_TOL = 1e-6
SUPPORT_WIDTH = 4.0  # default support: mean +- this many standard deviations


def gaussian_quantile(eps: float) -> float:
    if not 0 < eps <= 0.5:
        raise QuantileDomain(f"eps must lie in (0, 0.5], got {eps}")
    return float(norm.ppf(1.0 - eps))


def soc_violation(a, b, mu, Sigma, z) -> float:
    """Relative excess ``(mu.a + z ||Sigma^(1/2) a|| - b) / max(1, |b|)``."""
    a = np.asarray(a, dtype=float)
    spread = float(np.sqrt(max(a @ Sigma @ a, 0.0)))
    return (float(mu @ a) + z * spread - b) / max(1.0, abs(b))


def tangent_cut(row: CcRow, a_star, mu, Sigma, z):
    """The supporting hyperplane at ``a_star`` as ``(idx, coef, "<=", rhs)``, or None when ``Sigma a* = 0``."""
    a_star = np.asarray(a_star, dtype=float)
    g = Sigma @ a_star
    spread = float(np.sqrt(max(a_star @ g, 0.0)))
    if spread == 0.0:
        return None
    expr = linear_in_xi(row, mu + z * g / spread) - row.b
    idx, coef = expr.arrays()
    return idx, coef, "<=", -expr.const


def soc_cuts(rows: list[CcRow], mu, Sigma, z, tol: float = SOC_TOL):
    """Incumbent callback emitting one tangent cut per violated row."""

    def callback(x):
        a, b = row_values(rows, x)
        cuts = []
        for r, row in enumerate(rows):
            if soc_violation(a[r], b[r], mu, Sigma, z[r]) > tol:
                cut = tangent_cut(row, a[r], mu, Sigma, z[r])
                if cut is not None:
                    cuts.append(cut)
        return cuts

    return callback


def max_soc_violation(problem: Problem, x) -> float:
    info = problem.meta["gaussian"]
    a, b = row_values(info["rows"], x)
    if not len(b):
        return 0.0
    return max(soc_violation(a[r], b[r], info["mu"], info["Sigma"], info["z"][r]) for r in range(len(b)))


def build_gaussian(
    case: GridCase,
    ops: NetworkOperators,
    ambiguity: Gaussian,
    eps: float,
    L_o: int,
    F,
    support: Polytope | None = None,
    eps_override: dict | None = None,
) -> Problem:
    """Mean rows plus a cone-cut oracle for ``N(mu, Sigma)`` given in MW."""
    gaussian_quantile(eps)
    base = case.base_mva
    mu = np.asarray(ambiguity.mu, dtype=float) / base
    Sigma = np.asarray(ambiguity.Sigma, dtype=float) / base**2
    if support is None:
        half = SUPPORT_WIDTH * np.sqrt(np.diag(Sigma))
        half = np.where(half > 0, half, 1e-6)
        support_pu = Polytope.box(mu - half, mu + half)
    else:
        support_pu = support.scaled(1.0 / base)
    problem = build_backbone("gauss", case, ops, F, support_pu, L_o, float(mu.sum()), eps, eps_override)
    model = problem.model
    stochastic = []
    for row in problem.rows:
        if row_is_certain(model, row):
            add_certain_row(model, row)
            continue
        model.add_constraint(linear_in_xi(row, mu) - row.b, "<=", 0.0, f"mean_{row.label}")
        stochastic.append(row)
    z = np.array([gaussian_quantile(r.eps) for r in stochastic])
    problem.callbacks.append(soc_cuts(stochastic, mu, Sigma, z))
    problem.meta["gaussian"] = {"rows": stochastic, "mu": mu, "Sigma": Sigma, "z": z}
    return problem
