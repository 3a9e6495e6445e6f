"""Linear-decision-rule two-stage core.

Variables live in per-unit: ``xi`` enters every block already divided by
the case base. Positive ``xi`` is a withdrawal at its bus that the
generators cover in proportion to ``gamma``, so the injection change is
``(gamma 1^T - F) xi``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .case import GridCase, NetworkOperators, angle_bound_magnitude, is_connected
from .errors import IslandedTopology
from .milp.model import Affine, MilpModel
from .uncertainty import Polytope

Y_F_BOUND = 1.0
DUAL_BOUND = 1e6


@dataclass
class Layout:
    """Column indices of the decision blocks inside a model.

    ``gamma``, ``Y_theta`` and ``Y_f`` are ``None`` for the deterministic model.
    """

    g: np.ndarray
    theta: np.ndarray
    f: np.ndarray
    z: np.ndarray
    gamma: np.ndarray | None = None
    Y_theta: np.ndarray | None = None
    Y_f: np.ndarray | None = None

    @property
    def K(self) -> int:
        return 0 if self.Y_f is None else self.Y_f.shape[1]


@dataclass(frozen=True)
class CcRow:
    """One uncertain inequality ``a(x).xi <= b(x)`` with its tolerance."""

    kind: str  # reserve | gen | angle | flow
    side: str  # upper | lower
    index: int
    a: tuple  # K Affine expressions
    b: Affine
    eps: float = 0.05

    @property
    def label(self) -> str:
        return f"{self.kind}_{self.side}[{self.index}]"


@dataclass(frozen=True)
class FlowDualBlock:
    Phi1: np.ndarray  # L x W column indices
    Phi2: np.ndarray


@dataclass(frozen=True)
class RecourseMaps:
    Y_theta: np.ndarray
    Y_f: np.ndarray


def add_network(model: MilpModel, case: GridCase, ops: NetworkOperators, L_o: int, K: int = 0) -> Layout:
    """Declare (g, theta, f, z) with the nominal OTS rows; with ``K > 0`` also gamma and the Y maps."""
    arr = case.arrays()
    N, L = arr.n_bus, arr.n_line
    if not 0 <= L_o <= L:
        raise ValueError(f"L_o must lie in [0, {L}], got {L_o}")
    g = model.add_vars("g", N, arr.g_min, arr.g_max)
    th_lo, th_hi = arr.theta_min.copy(), arr.theta_max.copy()
    th_lo[arr.slack] = th_hi[arr.slack] = 0.0
    theta = model.add_vars("theta", N, th_lo, th_hi)
    f = model.add_vars("f", L, -arr.f_max, arr.f_max)
    z = model.add_vars("z", L, np.where(arr.switchable, 0.0, 1.0), 1.0, binary=True)
    if L_o == 0:
        for k in z:
            model.lb[k] = 1.0
    for n in range(N):
        model.set_objective(g[n], arr.cost[n])

    for l in range(L):
        model.add_row([f[l], z[l]], [1.0, -arr.f_max[l]], "<=", 0.0, f"flow_ub[{l}]")
        model.add_row([f[l], z[l]], [1.0, arr.f_max[l]], ">=", 0.0, f"flow_lb[{l}]")
    for n in range(N):
        cols = np.flatnonzero(ops.A[n])
        model.add_row(
            np.concatenate([f[cols], [g[n]]]), np.concatenate([ops.A[n, cols], [-1.0]]), "==", -arr.demand[n],
            f"balance[{n}]",
        )
    for l in range(L):
        cols = np.flatnonzero(ops.K[l])
        idx = np.concatenate([theta[cols], [f[l], z[l]]])
        # K theta - f + M (1 - z) >= 0  and  K theta - f - M (1 - z) <= 0
        model.add_row(idx, np.concatenate([ops.K[l, cols], [-1.0, -ops.M[l]]]), ">=", -ops.M[l], f"bigm_ge[{l}]")
        model.add_row(idx, np.concatenate([ops.K[l, cols], [-1.0, ops.M[l]]]), "<=", ops.M[l], f"bigm_le[{l}]")
    model.add_row(z, np.ones(L), ">=", L - L_o, "line_budget")
    layout = Layout(g=g, theta=theta, f=f, z=z)
    if K == 0:
        return layout

    gamma = model.add_vars("gamma", N, 0.0, np.where(arr.is_gen, 1.0, 0.0))
    model.add_row(gamma, np.ones(N), "==", 1.0, "gamma_sum")
    bound = angle_bound_magnitude(case)
    yt_lo = np.full((N, K), -bound)
    yt_hi = np.full((N, K), bound)
    yt_lo[arr.slack] = yt_hi[arr.slack] = 0.0
    Y_theta = model.add_vars("Y_theta", (N, K), yt_lo, yt_hi)
    Y_f = model.add_vars("Y_f", (L, K), -Y_F_BOUND, Y_F_BOUND)
    for l in range(L):
        for k in range(K):
            # recourse flow on an open line is zero
            model.add_row([Y_f[l, k], z[l]], [1.0, -Y_F_BOUND], "<=", 0.0, f"yf_open_ub[{l},{k}]")
            model.add_row([Y_f[l, k], z[l]], [1.0, Y_F_BOUND], ">=", 0.0, f"yf_open_lb[{l},{k}]")
    layout.gamma, layout.Y_theta, layout.Y_f = gamma, Y_theta, Y_f
    return layout


def balance_equality_block(model: MilpModel, layout: Layout, A: np.ndarray, F: np.ndarray) -> list[int]:
    """Rows ``A Y_f = gamma 1^T - F``, one per (bus, source)."""
    N, K = F.shape
    rows = []
    for n in range(N):
        cols = np.flatnonzero(A[n])
        for k in range(K):
            idx = np.concatenate([layout.Y_f[cols, k], [layout.gamma[n]]])
            coef = np.concatenate([A[n, cols], [-1.0]])
            rows.append(model.add_row(idx, coef, "==", -F[n, k], f"recourse_balance[{n},{k}]"))
    return rows


def _phi_bound(case: GridCase, ops: NetworkOperators, support: Polytope) -> float:
    if not support.is_box():
        return DUAL_BOUND
    # for a box the cheapest multiplier equals |Y_f - K Y_theta| componentwise
    return float(Y_F_BOUND + np.abs(ops.K).sum(axis=1).max() * angle_bound_magnitude(case))


def flow_dual_blocks(
    model: MilpModel, layout: Layout, case: GridCase, ops: NetworkOperators, support: Polytope
) -> FlowDualBlock:
    """Finite replacement of the big-M flow rows holding for every ``xi`` in the support."""
    U, t = support.U, support.t
    L, K = layout.Y_f.shape
    W = U.shape[0]
    bound = _phi_bound(case, ops, support)
    Phi1 = model.add_vars("Phi1", (L, W), 0.0, bound)
    Phi2 = model.add_vars("Phi2", (L, W), 0.0, bound)
    for l in range(L):
        kcols = np.flatnonzero(ops.K[l])
        for Phi, sign, tag in ((Phi1, 1.0, "1"), (Phi2, -1.0, "2")):
            for k in range(K):
                wcols = np.flatnonzero(U[:, k])
                # Y_f = K Y_theta + sign * Phi^T U
                idx = np.concatenate([[layout.Y_f[l, k]], layout.Y_theta[kcols, k], Phi[l, wcols]])
                coef = np.concatenate([[1.0], -ops.K[l, kcols], -sign * U[wcols, k]])
                model.add_row(idx, coef, "==", 0.0, f"flowdual_{tag}_eq[{l},{k}]")
            wcols = np.flatnonzero(t)
            idx = np.concatenate([layout.theta[kcols], [layout.f[l], layout.z[l]], Phi[l, wcols]])
            if sign > 0:
                # K theta + M (1 - z) - Phi1^T t >= f
                coef = np.concatenate([ops.K[l, kcols], [-1.0, -ops.M[l]], -t[wcols]])
            else:
                # M (1 - z) - Phi2^T t + f >= K theta
                coef = np.concatenate([-ops.K[l, kcols], [1.0, -ops.M[l]], -t[wcols]])
            model.add_row(idx, coef, ">=", -ops.M[l], f"flowdual_{tag}_ineq[{l}]")
    return FlowDualBlock(Phi1, Phi2)


def cc_row_set(case: GridCase, layout: Layout, eps: float = 0.05, eps_override: dict | None = None) -> list[CcRow]:
    """The uncertain rows: reserve, generation, angle and flow limits, upper then lower side."""
    arr = case.arrays()
    K = layout.K
    eps_override = eps_override or {}
    ones = np.ones(K)
    rows: list[CcRow] = []

    def emit(kind, side, i, a, b):
        label = f"{kind}_{side}[{i}]"
        rows.append(CcRow(kind, side, i, tuple(a), b, float(eps_override.get(label, eps))))

    def gamma_terms(n, sign):
        return [Affine.var(layout.gamma[n], sign * c) for c in ones]

    def y_terms(Y, i, sign):
        return [Affine.var(Y[i, k], sign) for k in range(K)]

    for n in range(arr.n_bus):
        emit("reserve", "upper", n, gamma_terms(n, 1.0), Affine.constant(arr.r_max[n]))
        emit("reserve", "lower", n, gamma_terms(n, -1.0), Affine.constant(-arr.r_min[n]))
    for n in range(arr.n_bus):
        emit("gen", "upper", n, gamma_terms(n, 1.0), Affine.var(layout.g[n], -1.0) + arr.g_max[n])
        emit("gen", "lower", n, gamma_terms(n, -1.0), Affine.var(layout.g[n]) - arr.g_min[n])
    for n in range(arr.n_bus):
        emit("angle", "upper", n, y_terms(layout.Y_theta, n, 1.0), Affine.var(layout.theta[n], -1.0) + arr.theta_max[n])
        emit("angle", "lower", n, y_terms(layout.Y_theta, n, -1.0), Affine.var(layout.theta[n]) - arr.theta_min[n])
    for l in range(arr.n_line):
        emit("flow", "upper", l, y_terms(layout.Y_f, l, 1.0),
             Affine({layout.z[l]: arr.f_max[l], layout.f[l]: -1.0}))
        emit("flow", "lower", l, y_terms(layout.Y_f, l, -1.0),
             Affine({layout.z[l]: arr.f_max[l], layout.f[l]: 1.0}))
    return rows


def row_values(rows: list[CcRow], x) -> tuple[np.ndarray, np.ndarray]:
    """Numeric ``(a, b)`` of every row at decision vector ``x``: shapes ``(R, K)`` and ``(R,)``."""
    a = np.array([[e.value(x) for e in row.a] for row in rows])
    b = np.array([row.b.value(x) for row in rows])
    return a, b


def _reduced_solve(case: GridCase, ops: NetworkOperators, z, rhs: np.ndarray) -> np.ndarray:
    arr = case.arrays()
    z = np.asarray(z, dtype=float)
    if not is_connected(arr.n_bus, arr.from_idx, arr.to_idx, z):
        raise IslandedTopology(f"topology {np.flatnonzero(z < 0.5).tolist()} open leaves the network islanded")
    B = ops.A @ (z[:, None] * ops.K)
    keep = np.delete(np.arange(arr.n_bus), arr.slack)
    lu = lu_factor(B[np.ix_(keep, keep)])
    theta = np.zeros((arr.n_bus,) + rhs.shape[1:])
    theta[keep] = lu_solve(lu, rhs[keep])
    return theta


def recourse_matrices(case: GridCase, ops: NetworkOperators, z, gamma, F) -> RecourseMaps:
    """Angle and flow responses to ``xi`` fixed by topology ``z`` and participation ``gamma``."""
    F = np.asarray(F, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    z = np.asarray(z, dtype=float)
    injection = np.outer(gamma, np.ones(F.shape[1])) - F
    Y_theta = _reduced_solve(case, ops, z, injection)
    Y_f = (z[:, None] * ops.K) @ Y_theta
    return RecourseMaps(Y_theta, Y_f)


def dc_flow(case: GridCase, ops: NetworkOperators, z, injection) -> tuple[np.ndarray, np.ndarray]:
    """Angles (slack at 0) and line flows for a balanced per-unit injection vector."""
    z = np.asarray(z, dtype=float)
    theta = _reduced_solve(case, ops, z, np.asarray(injection, dtype=float))
    return theta, (z * (ops.K @ theta))


def connectivity_cuts(case: GridCase, layout: Layout):
    """Incumbent callback returning a no-good cut when the closed lines island the grid."""
    arr = case.arrays()

    def callback(x):
        zv = np.round(x[layout.z])
        if is_connected(arr.n_bus, arr.from_idx, arr.to_idx, zv):
            return []
        opened = layout.z[zv < 0.5]
        return [(opened, np.ones(opened.size), ">=", 1.0)]

    return callback


def combine_callbacks(*callbacks):
    """Run callbacks in order and return the first non-empty cut list."""

    def callback(x):
        for cb in callbacks:
            if cb is None:
                continue
            cuts = cb(x)
            if cuts:
                return cuts
        return []

    return callback
