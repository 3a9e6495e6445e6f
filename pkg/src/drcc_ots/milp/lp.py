"""LP solving on the model IR.

The default engine is the HiGHS dual simplex (via ``highspy``) driven
through :class:`LpSession`, which keeps the factorized basis alive across
bound changes and appended rows so branch-and-bound re-solves are warm.
``engine="dense"`` routes small models through the in-house simplex in
:mod:`.simplex`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import highspy
import numpy as np

from ..errors import NumericalBreakdown
from .model import MilpModel
from .simplex import dense_simplex

FEAS_TOL = 1e-9
_INF = highspy.kHighsInf
_SETTLED = (
    highspy.HighsModelStatus.kOptimal,
    highspy.HighsModelStatus.kInfeasible,
    highspy.HighsModelStatus.kUnbounded,
    highspy.HighsModelStatus.kUnboundedOrInfeasible,
)


class LpStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass
class LpResult:
    status: LpStatus
    x: np.ndarray | None
    duals: np.ndarray | None
    objective: float
    iterations: int
    residuals: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def _finite(values):
    return np.clip(np.asarray(values, dtype=float), -_INF, _INF)


def _row_scale(model: MilpModel) -> np.ndarray:
    """Per-row divisor bringing the largest coefficient magnitude to 1."""
    scale = np.ones(model.n_rows)
    coef = np.abs(np.asarray(model.coef, dtype=float))
    starts = np.asarray(model.row_start, dtype=int)
    for r in range(model.n_rows):
        lo, hi = starts[r], starts[r + 1]
        if hi > lo:
            scale[r] = coef[lo:hi].max()
    return scale


class LpSession:
    """A HiGHS instance holding the continuous relaxation of a model.

    Binary columns are relaxed to ``[lb, ub]``. Rows are scaled so that
    each has max-abs coefficient 1; results are reported unscaled.
    """

    def __init__(self, model: MilpModel, presolve: bool = False, time_limit: float | None = None):
        self.model = model
        self.n = model.n_vars
        self.h = highspy.Highs()
        self.h.setOptionValue("output_flag", False)
        self.h.setOptionValue("threads", 1)
        self.h.setOptionValue("presolve", "on" if presolve else "off")
        self.h.setOptionValue("primal_feasibility_tolerance", FEAS_TOL)
        self.h.setOptionValue("dual_feasibility_tolerance", FEAS_TOL)
        if time_limit is not None:
            self.h.setOptionValue("time_limit", float(time_limit))
        self.scale = _row_scale(model)
        A = model.matrix()
        if model.n_rows:
            A = (A.T.multiply(1.0 / self.scale)).T.tocsc()
        else:
            A = A.tocsc()
        lo, hi = model.row_bounds()
        lp = highspy.HighsLp()
        lp.num_col_ = self.n
        lp.num_row_ = model.n_rows
        lp.col_cost_ = model.objective_vector()
        lb, ub = model.bounds()
        lp.col_lower_ = _finite(lb)
        lp.col_upper_ = _finite(ub)
        lp.row_lower_ = _finite(lo / self.scale)
        lp.row_upper_ = _finite(hi / self.scale)
        lp.offset_ = float(model.objective_constant)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr.astype(np.int32)
        lp.a_matrix_.index_ = A.indices.astype(np.int32)
        lp.a_matrix_.value_ = A.data.astype(float)
        lp.a_matrix_.num_col_ = self.n
        lp.a_matrix_.num_row_ = model.n_rows
        self.h.passModel(lp)
        self.row_scales = list(self.scale)

    def set_bounds(self, idx, lb, ub) -> None:
        idx = np.asarray(idx, dtype=np.int32)
        if idx.size:
            self.h.changeColsBounds(idx.size, idx, _finite(lb), _finite(ub))

    def set_row_bounds(self, rows, lo, hi) -> None:
        """Replace the bounds of existing rows (given in the unscaled model units)."""
        rows = np.asarray(rows, dtype=np.int32)
        s = np.asarray(self.row_scales, dtype=float)[rows]
        self.h.changeRowsBounds(rows.size, rows, _finite(np.asarray(lo) / s), _finite(np.asarray(hi) / s))

    def add_rows(self, rows) -> None:
        """Append rows given as ``(idx, coef, sense, rhs)`` tuples."""
        for idx, coef, sense, rhs in rows:
            idx = np.asarray(idx, dtype=np.int32)
            coef = np.asarray(coef, dtype=float)
            s = float(np.max(np.abs(coef))) if coef.size else 1.0
            lo = -_INF if sense == "<=" else rhs / s
            hi = _INF if sense == ">=" else rhs / s
            self.h.addRow(lo, hi, idx.size, idx, coef / s)
            self.row_scales.append(s)

    def solve(self) -> LpResult:
        self.h.run()
        status = self.h.getModelStatus()
        if status not in _SETTLED:
            # a stale basis occasionally stalls the dual simplex; retry cold
            self.h.clearSolver()
            self.h.run()
            status = self.h.getModelStatus()
        if status not in _SETTLED:
            self.h.clearSolver()
            self.h.setOptionValue("simplex_strategy", 4)
            self.h.run()
            self.h.setOptionValue("simplex_strategy", 1)
            status = self.h.getModelStatus()
        info = self.h.getInfo()
        iters = int(info.simplex_iteration_count)
        if status == highspy.HighsModelStatus.kUnboundedOrInfeasible:
            # dual simplex cannot tell; a feasibility probe with zero cost can
            probe = highspy.Highs()
            probe.setOptionValue("output_flag", False)
            lp = self.h.getLp()
            lp.col_cost_ = np.zeros(lp.num_col_)
            probe.passModel(lp)
            probe.run()
            if probe.getModelStatus() == highspy.HighsModelStatus.kOptimal:
                return LpResult(LpStatus.UNBOUNDED, None, None, -np.inf, iters)
            return LpResult(LpStatus.INFEASIBLE, None, None, np.inf, iters)
        if status == highspy.HighsModelStatus.kInfeasible:
            return LpResult(LpStatus.INFEASIBLE, None, None, np.inf, iters)
        if status == highspy.HighsModelStatus.kUnbounded:
            return LpResult(LpStatus.UNBOUNDED, None, None, -np.inf, iters)
        if status != highspy.HighsModelStatus.kOptimal:
            raise NumericalBreakdown(f"HiGHS returned {self.h.modelStatusToString(status)}")
        sol = self.h.getSolution()
        x = np.array(sol.col_value, dtype=float)
        duals = np.array(sol.row_dual, dtype=float) / np.asarray(self.row_scales)
        res = LpResult(LpStatus.OPTIMAL, x, duals, float(info.objective_function_value), iters)
        res.residuals = {
            "primal": float(info.max_primal_infeasibility),
            "dual": float(info.max_dual_infeasibility),
        }
        return res

    def iterations(self) -> int:
        return int(self.h.getInfo().simplex_iteration_count)


def _dense_solve(model: MilpModel) -> LpResult:
    A = model.matrix().toarray()
    senses = np.array(model.senses)
    rhs = np.array(model.rhs, dtype=float)
    le = senses == "<="
    ge = senses == ">="
    eq = senses == "=="
    A_ub = np.vstack([A[le], -A[ge]])
    b_ub = np.concatenate([rhs[le], -rhs[ge]])
    lb, ub = model.bounds()
    status, x, obj, iters = dense_simplex(
        model.objective_vector(), A_ub, b_ub, A[eq], rhs[eq], bounds=(lb, ub)
    )
    if status == "optimal":
        return LpResult(LpStatus.OPTIMAL, x, None, obj + model.objective_constant, iters)
    if status == "infeasible":
        return LpResult(LpStatus.INFEASIBLE, None, None, np.inf, iters)
    return LpResult(LpStatus.UNBOUNDED, None, None, -np.inf, iters)


def certify(model: MilpModel, res: LpResult) -> dict:
    """Primal, dual and complementarity residuals of an optimal result.

    Uses the HiGHS sign convention ``c = A^T y + d``.
    """
    x, y = res.x, res.duals
    A = model.matrix()
    lb, ub = model.bounds()
    lo, hi = model.row_bounds()
    act = A @ x
    scale = _row_scale(model)
    primal = max(
        float(np.max(np.maximum(lo - act, act - hi) / scale, initial=0.0)),
        float(np.max(np.maximum(lb - x, x - ub), initial=0.0)),
    )
    d = model.objective_vector() - A.T @ y
    tol = 1e-7
    at_lb = np.abs(x - lb) <= tol
    at_ub = np.abs(x - ub) <= tol
    # reduced cost sign: >= 0 allowed at lb, <= 0 at ub, ~0 strictly inside
    dual = np.where(at_lb & at_ub, 0.0, np.where(at_lb, np.maximum(-d, 0), np.where(at_ub, np.maximum(d, 0), np.abs(d))))
    row_at_lo = np.abs(act - lo) <= tol * scale
    row_at_hi = np.abs(act - hi) <= tol * scale
    ys = y * scale
    row_dual = np.where(row_at_lo & row_at_hi, 0.0, np.where(row_at_lo, np.maximum(-ys, 0), np.where(row_at_hi, np.maximum(ys, 0), np.abs(ys))))
    slack = np.minimum(np.abs(act - lo), np.abs(act - hi)) / scale
    comp = float(np.max(np.abs(ys) * np.where(np.isfinite(slack), slack, 0.0), initial=0.0))
    return {
        "primal": primal,
        "dual": max(float(np.max(dual, initial=0.0)), float(np.max(row_dual, initial=0.0))),
        "complementarity": comp,
    }


def solve_lp(model: MilpModel, warm_start: LpSession | None = None, engine: str = "highs") -> LpResult:
    """Solve the continuous relaxation of ``model``.

    ``warm_start`` may be a live :class:`LpSession` built on the same model;
    it is re-solved from its current basis.
    """
    if engine == "dense":
        return _dense_solve(model)
    if engine != "highs":
        raise ValueError(f"unknown LP engine {engine!r}")
    session = warm_start if warm_start is not None else LpSession(model)
    res = session.solve()
    if res.optimal:
        res.residuals.update(certify(model, res) if model.n_rows == len(session.row_scales) else {})
    return res
