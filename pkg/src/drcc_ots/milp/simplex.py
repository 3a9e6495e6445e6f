"""Dense bounded-variable primal simplex.

A small, dependency-free LP kernel used for cross-checking the HiGHS
backed path on desk-scale models. Two phases; Dantzig pricing with a
Bland fallback once the objective stalls for ``10 * rows`` iterations.
"""
from __future__ import annotations

import numpy as np

from ..errors import NumericalBreakdown

_TOL = 1e-9


def _iterate(c, A, lo, hi, basis, x, max_iter):
    """Run primal simplex from a feasible basic solution; returns (status, x, basis, iters)."""
    m, n = A.shape
    is_basic = np.zeros(n, dtype=bool)
    is_basic[basis] = True
    stall = 0
    best = float(c @ x)
    bland = False
    for it in range(max_iter):
        B = A[:, basis]
        try:
            y = np.linalg.solve(B.T, c[basis])
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown("singular basis in dense simplex") from exc
        d = c - A.T @ y
        d[is_basic] = 0.0
        inc = (~is_basic) & (d < -_TOL) & (x < hi - _TOL)
        dec = (~is_basic) & (d > _TOL) & (x > lo + _TOL)
        cand = np.flatnonzero(inc | dec)
        if cand.size == 0:
            return "optimal", x, basis, it, y
        if bland:
            j = int(cand[0])
        else:
            j = int(cand[np.argmax(np.abs(d[cand]))])
        direction = 1.0 if inc[j] else -1.0
        w = np.linalg.solve(B, A[:, j]) * direction
        # x_B moves by -t*w as x_j moves by t*direction
        step = hi[j] - lo[j]
        leave = -1
        for i in range(m):
            k = basis[i]
            if w[i] > _TOL:
                ratio = (x[k] - lo[k]) / w[i]
            elif w[i] < -_TOL:
                ratio = (hi[k] - x[k]) / (-w[i])
            else:
                continue
            if ratio < step - _TOL or (leave >= 0 and abs(ratio - step) <= _TOL and bland and k < basis[leave]):
                step, leave = max(ratio, 0.0), i
        if not np.isfinite(step):
            return "unbounded", x, basis, it, None
        x = x.copy()
        x[j] += direction * step
        x[basis] -= step * w
        if leave >= 0:
            k = basis[leave]
            x[k] = lo[k] if w[leave] > 0 else hi[k]
            is_basic[k] = False
            is_basic[j] = True
            basis = basis.copy()
            basis[leave] = j
        obj = float(c @ x)
        if obj < best - 1e-12:
            best, stall = obj, 0
        else:
            stall += 1
            if stall > 10 * max(m, 1):
                bland = True
    raise NumericalBreakdown("dense simplex iteration limit")


def dense_simplex(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None, max_iter=50_000):
    """Solve ``min c.x`` s.t. ``A_ub x <= b_ub``, ``A_eq x == b_eq``, ``lo <= x <= hi``.

    Returns ``(status, x, objective, iterations)`` with status one of
    ``"optimal"``, ``"infeasible"``, ``"unbounded"``.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    lo, hi = (np.zeros(n), np.full(n, np.inf)) if bounds is None else (
        np.asarray(bounds[0], dtype=float), np.asarray(bounds[1], dtype=float))
    rows, rhs, slack_sign = [], [], []
    if A_ub is not None and len(A_ub):
        rows.append(np.asarray(A_ub, dtype=float))
        rhs.append(np.asarray(b_ub, dtype=float))
        slack_sign.append(np.ones(len(b_ub)))
    if A_eq is not None and len(A_eq):
        rows.append(np.asarray(A_eq, dtype=float))
        rhs.append(np.asarray(b_eq, dtype=float))
        slack_sign.append(np.zeros(len(b_eq)))
    if not rows:
        x = np.where(c >= 0, lo, hi)
        if not np.all(np.isfinite(x)):
            return "unbounded", None, -np.inf, 0
        return "optimal", x, float(c @ x), 0
    Am = np.vstack(rows)
    b = np.concatenate(rhs)
    sl = np.concatenate(slack_sign)
    m = Am.shape[0]
    n_slack = int(sl.sum())
    S = np.zeros((m, n_slack))
    S[np.flatnonzero(sl), np.arange(n_slack)] = 1.0
    # start structural variables at a finite bound
    x0 = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
    resid = b - Am @ x0
    art_sign = np.where(resid >= 0, 1.0, -1.0)
    Art = np.diag(art_sign)
    A = np.hstack([Am, S, Art])
    lo_all = np.concatenate([lo, np.zeros(n_slack), np.zeros(m)])
    hi_all = np.concatenate([hi, np.full(n_slack, np.inf), np.full(m, np.inf)])
    x = np.concatenate([x0, np.zeros(n_slack), np.abs(resid)])
    basis = np.arange(n + n_slack, n + n_slack + m)
    c1 = np.concatenate([np.zeros(n + n_slack), np.ones(m)])
    status, x, basis, it1, _ = _iterate(c1, A, lo_all, hi_all, basis, x, max_iter)
    if x[n + n_slack :].sum() > 1e-7:
        return "infeasible", None, np.nan, it1
    hi_all[n + n_slack :] = 0.0
    c2 = np.concatenate([c, np.zeros(n_slack + m)])
    status, x, basis, it2, _ = _iterate(c2, A, lo_all, hi_all, basis, x, max_iter)
    if status == "unbounded":
        return "unbounded", None, -np.inf, it1 + it2
    xs = x[:n]
    return "optimal", xs, float(c @ xs), it1 + it2
