"""Out-of-sample evaluation: violation rates, expected cost and curtailment."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .case import GridCase, NetworkOperators
from .errors import CurtailmentInfeasible, DimensionMismatch, NumericalBreakdown
from .milp.lp import LpSession
from .milp.model import MilpModel
from .reformulate.problem import Solution
from .two_stage import cc_row_set, dc_flow, row_values
from .uncertainty import ScenarioSet

REPORT_SCHEMA_VERSION = "1.0"
VIOLATION_TOL = 1e-7
CROSS_CHECK_TOL = 1e-8


def _fmean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else 0.0


@dataclass
class EvaluationReport:
    method: str
    n_samples: int
    oos_cost: float
    average_violation_rate: float  # mean over rows of the per-row scenario frequency
    joint_violation_rate: float  # fraction of scenarios violating any row
    max_row_violation_rate: float
    row_labels: list = field(default_factory=list)
    row_violation_rates: list = field(default_factory=list)
    curtailment_mean: float | None = None  # MW
    curtailment_stderr: float | None = None
    curtailment_summary: dict = field(default_factory=dict)
    curtailment_infeasible: int = 0
    opened_lines: list = field(default_factory=list)
    eps: float | None = None
    L_o: int = 0
    cross_check_max_error: float | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["schema_version"] = REPORT_SCHEMA_VERSION
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        """One summary line in the column order of a method comparison table."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "one_minus_eps", "L_o", "switching_decision", "oos_cost",
                    "average_violation_rate", "joint_violation_rate", "curtailment_mean_mw", "samples"])
        w.writerow([
            self.method,
            "" if self.eps is None else f"{1 - self.eps:.4g}",
            self.L_o,
            "[" + ";".join(map(str, self.opened_lines)) + "]",
            f"{self.oos_cost:.6f}",
            f"{self.average_violation_rate:.6f}",
            f"{self.joint_violation_rate:.6f}",
            "" if self.curtailment_mean is None else f"{self.curtailment_mean:.6f}",
            self.n_samples,
        ])
        return buf.getvalue()

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "violation_rate"])
        for label, rate in zip(self.row_labels, self.row_violation_rates):
            w.writerow([label, f"{rate:.6f}"])
        return buf.getvalue()


def _require_two_stage(sol: Solution, K: int):
    if sol.K == 0:
        raise DimensionMismatch("solution carries no recourse maps; solve a chance-constrained method first")
    if sol.K != K:
        raise DimensionMismatch(f"scenarios have K={K} but the solution expects K={sol.K}")


def violation_matrix(sol: Solution, case: GridCase, xi_pu: np.ndarray):
    """Row labels and the boolean ``(rows, scenarios)`` violation matrix."""
    layout, x = sol.packed()
    rows = cc_row_set(case, layout)
    a, b = row_values(rows, x)
    lhs = a @ xi_pu.T
    return [r.label for r in rows], lhs > b[:, None] + VIOLATION_TOL


def oos_cost(sol: Solution, case: GridCase, xi_pu: np.ndarray) -> float:
    arr = case.arrays()
    first = math.fsum(arr.cost * sol.g)
    return first + float(arr.recourse_cost @ sol.gamma) * _fmean(xi_pu.sum(axis=1))


class CurtailmentSolver:
    """The curtailment LP for one solution, re-used across scenarios by updating bounds."""

    def __init__(self, sol: Solution, case: GridCase, paper_exact: bool = False):
        arr = case.arrays()
        self.sol = sol
        self.paper_exact = paper_exact
        self.K = sol.K
        Y = np.vstack([sol.Y_theta, sol.Y_f])
        base = np.concatenate([sol.theta, sol.f])
        lo = np.concatenate([arr.theta_min, -arr.f_max * sol.z])
        hi = np.concatenate([arr.theta_max, arr.f_max * sol.z])
        keep = np.flatnonzero(np.any(Y != 0.0, axis=1))
        self.Y, self.base, self.lo, self.hi = Y[keep], base[keep], lo[keep], hi[keep]
        model = MilpModel(name="curtailment")
        self.cols = model.add_vars("xi_c", self.K, 0.0, np.inf)
        for k in self.cols:
            model.set_objective(k, 1.0)
        for r in range(self.Y.shape[0]):
            nz = np.flatnonzero(self.Y[r])
            model.add_row(self.cols[nz], -self.Y[r, nz], "==", 0.0, f"limit[{r}]")
        self.session = LpSession(model)
        self.rows = np.arange(model.n_rows)

    def feasible(self, xi: np.ndarray) -> bool:
        value = self.base + self.Y @ xi
        return bool(np.all(value <= self.hi + VIOLATION_TOL) and np.all(value >= self.lo - VIOLATION_TOL))

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.feasible(xi):
            return np.zeros(self.K)
        cap = np.full(self.K, np.inf) if self.paper_exact else np.maximum(xi, 0.0)
        self.session.set_bounds(self.cols, np.zeros(self.K), cap)
        shift = self.base + self.Y @ xi
        self.session.set_row_bounds(self.rows, self.lo - shift, self.hi - shift)
        res = self.session.solve()
        if not res.optimal:
            raise CurtailmentInfeasible("no curtailment restores the angle and flow limits")
        return np.maximum(res.x, 0.0)


def curtailment(sol: Solution, xi, case: GridCase, paper_exact: bool = False) -> np.ndarray:
    """Least total curtailment (MW) bringing scenario ``xi`` (MW) inside the angle and flow limits."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    _require_two_stage(sol, xi.size)
    base = case.base_mva
    return CurtailmentSolver(sol, case, paper_exact)(xi / base) * base


def monte_carlo_curtailment(sol: Solution, test: ScenarioSet, case: GridCase, paper_exact: bool = False) -> dict:
    """Mean, standard error and quantiles of total curtailment (MW); infeasible scenarios counted apart."""
    _require_two_stage(sol, test.K)
    solver = CurtailmentSolver(sol, case, paper_exact)
    base = case.base_mva
    totals = []
    infeasible = 0
    for xi in test.samples / base:
        try:
            totals.append(math.fsum(solver(xi)) * base)
        except CurtailmentInfeasible:
            infeasible += 1
    if not totals:
        return {"mean": None, "stderr": None, "summary": {}, "infeasible": infeasible}
    vals = np.sort(np.array(totals))
    mean = _fmean(vals)
    var = math.fsum((v - mean) ** 2 for v in vals) / max(len(vals) - 1, 1)
    summary = {
        "p50": float(np.quantile(vals, 0.5)),
        "p90": float(np.quantile(vals, 0.9)),
        "p99": float(np.quantile(vals, 0.99)),
        "max": float(vals[-1]),
        "nonzero_fraction": float(np.count_nonzero(vals > 0) / len(vals)),
    }
    return {"mean": mean, "stderr": math.sqrt(var / len(vals)), "summary": summary, "infeasible": infeasible}


def cross_check(sol: Solution, case: GridCase, ops: NetworkOperators, xi_pu: np.ndarray, F) -> float:
    """Largest gap between the recourse maps and a dc re-solve over the given per-unit scenarios."""
    arr = case.arrays()
    worst = 0.0
    for xi in xi_pu:
        injection = sol.g + sol.gamma * xi.sum() - arr.demand - np.asarray(F) @ xi
        theta, flow = dc_flow(case, ops, sol.z, injection)
        worst = max(
            worst,
            float(np.max(np.abs(theta - (sol.theta + sol.Y_theta @ xi)))),
            float(np.max(np.abs(flow - (sol.f + sol.Y_f @ xi)))),
        )
    return worst


def oos_evaluate(
    sol: Solution,
    test: ScenarioSet,
    case: GridCase,
    ops: NetworkOperators | None = None,
    with_curtailment: bool = True,
    paper_exact: bool = False,
    F=None,
    cross_check_fraction: float = 0.0,
    seed: int = 0,
) -> EvaluationReport:
    """Evaluate ``sol`` on MW scenarios ``test``.

    With ``cross_check_fraction > 0`` (requires ``ops`` and ``F``) that share of
    scenarios is re-solved through the dc equations and the agreement asserted.
    """
    _require_two_stage(sol, test.K)
    xi_pu = test.samples / case.base_mva
    labels, viol = violation_matrix(sol, case, xi_pu)
    per_row = viol.mean(axis=1)
    report = EvaluationReport(
        method=sol.method,
        n_samples=test.S,
        oos_cost=oos_cost(sol, case, xi_pu),
        average_violation_rate=_fmean(per_row),
        joint_violation_rate=float(np.any(viol, axis=0).mean()),
        max_row_violation_rate=float(per_row.max()),
        row_labels=labels,
        row_violation_rates=[float(v) for v in per_row],
        opened_lines=sol.opened_lines,
        eps=sol.eps,
        L_o=sol.L_o,
    )
    if with_curtailment:
        mc = monte_carlo_curtailment(sol, test, case, paper_exact)
        report.curtailment_mean = mc["mean"]
        report.curtailment_stderr = mc["stderr"]
        report.curtailment_summary = mc["summary"]
        report.curtailment_infeasible = mc["infeasible"]
    if cross_check_fraction > 0:
        if ops is None or F is None:
            raise ValueError("cross-check needs the network operators and the placement matrix")
        n = max(1, int(round(cross_check_fraction * test.S)))
        pick = np.sort(np.random.default_rng(seed).choice(test.S, size=min(n, test.S), replace=False))
        err = cross_check(sol, case, ops, xi_pu[pick], F)
        report.cross_check_max_error = err
        if err >= CROSS_CHECK_TOL:
            raise NumericalBreakdown(f"recourse maps disagree with a dc re-solve by {err:.3e}")
    return report


def plotdata_csv(records) -> str:
    """Sweep table: one line per ``(eps, L_o)`` with cost, violation and curtailment."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eps", "L_o", "objective", "oos_cost", "average_violation_rate", "curtailment_mean_mw", "status"])
    for r in records:
        w.writerow([
            r["eps"], r["L_o"],
            "" if r.get("objective") is None else f"{r['objective']:.6f}",
            "" if r.get("oos_cost") is None else f"{r['oos_cost']:.6f}",
            "" if r.get("average_violation_rate") is None else f"{r['average_violation_rate']:.6f}",
            "" if r.get("curtailment_mean") is None else f"{r['curtailment_mean']:.6f}",
            r.get("status", ""),
        ])
    return buf.getvalue()
