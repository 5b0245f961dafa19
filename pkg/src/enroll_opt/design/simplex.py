"""Dense two-phase primal simplex for small bounded-variable LPs.

Solves ``min c.x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq`` and
``lower <= x <= upper`` (``upper`` may be infinite).  Non-basic variables sit
at either bound, so box constraints never enter the basis as rows.  Bland's
rule picks entering and leaving variables, which guarantees termination and
breaks ties toward the lowest variable index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConvergenceError, InfeasibleError

__all__ = ["LPResult", "UnboundedLPError", "solve_lp"]


class UnboundedLPError(ArithmeticError):
    pass


@dataclass
class LPResult:
    x: np.ndarray
    objective: float
    iterations: int


_LOWER, _UPPER, _BASIC = 0, 1, 2


def _simplex(A, b, cost, lo, hi, basis, status, x, tol, max_iter):
    m, N = A.shape
    it = 0
    while True:
        it += 1
        if it > max_iter:
            raise ConvergenceError(f"simplex exceeded {max_iter} iterations")
        B = A[:, basis]
        nonbasic = status != _BASIC
        # recompute basic values from the non-basic ones to stop drift
        x[basis] = np.linalg.solve(B, b - A[:, nonbasic] @ x[nonbasic])
        pi = np.linalg.solve(B.T, cost[basis])
        d = cost - A.T @ pi
        enter = -1
        for j in range(N):
            if status[j] == _LOWER and d[j] < -tol and hi[j] > lo[j]:
                enter = j
                break
            if status[j] == _UPPER and d[j] > tol:
                enter = j
                break
        if enter < 0:
            return it
        direction = 1.0 if status[enter] == _LOWER else -1.0
        w = np.linalg.solve(B, A[:, enter]) * direction
        theta = hi[enter] - lo[enter]
        leave_row = -1
        leave_bound = _LOWER
        for i in range(m):
            bi = basis[i]
            if w[i] > tol:
                step = (x[bi] - lo[bi]) / w[i]
                bound = _LOWER
            elif w[i] < -tol and np.isfinite(hi[bi]):
                step = (hi[bi] - x[bi]) / -w[i]
                bound = _UPPER
            else:
                continue
            step = max(step, 0.0)
            if step < theta - tol or (
                abs(step - theta) <= tol and leave_row >= 0 and bi < basis[leave_row]
            ):
                theta, leave_row, leave_bound = step, i, bound
        if not np.isfinite(theta):
            raise UnboundedLPError("objective is unbounded below")
        x[enter] += direction * theta
        x[basis] -= theta * w
        if leave_row < 0:
            status[enter] = _UPPER if status[enter] == _LOWER else _LOWER
            x[enter] = hi[enter] if status[enter] == _UPPER else lo[enter]
            continue
        out = basis[leave_row]
        status[out] = leave_bound
        x[out] = lo[out] if leave_bound == _LOWER else hi[out]
        basis[leave_row] = enter
        status[enter] = _BASIC


def solve_lp(
    c,
    A_ub=None,
    b_ub=None,
    A_eq=None,
    b_eq=None,
    lower=None,
    upper=None,
    tol: float = 1e-9,
    max_iter: int = 10_000,
) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    lower = np.zeros(n) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    if np.any(~np.isfinite(lower)):
        raise ValueError("lower bounds must be finite")
    if np.any(upper < lower - tol):
        raise InfeasibleError("a variable has upper bound below its lower bound")
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.atleast_1d(np.asarray(b_ub, dtype=float))
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, dtype=float))
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq
    if m == 0:
        x = np.where(c < 0, upper, lower)
        if np.any(~np.isfinite(x)):
            raise UnboundedLPError("objective is unbounded below")
        return LPResult(x, float(c @ x), 0)

    # columns: structural | slacks | artificials
    A = np.zeros((m, n + m_ub + m))
    A[:m_ub, :n] = A_ub
    A[m_ub:, :n] = A_eq
    A[:m_ub, n : n + m_ub] = np.eye(m_ub)
    b = np.concatenate([b_ub, b_eq])
    N = A.shape[1]
    lo = np.zeros(N)
    hi = np.full(N, np.inf)
    lo[:n], hi[:n] = lower, upper
    x = np.zeros(N)
    x[:n] = lower
    residual = b - A[:, : n + m_ub] @ x[: n + m_ub]
    art = np.arange(n + m_ub, N)
    A[np.arange(m), art] = np.where(residual >= 0, 1.0, -1.0)
    x[art] = np.abs(residual)
    status = np.full(N, _LOWER)
    status[art] = _BASIC
    basis = art.copy()

    phase1 = np.zeros(N)
    phase1[art] = 1.0
    it1 = _simplex(A, b, phase1, lo, hi, basis, status, x, tol, max_iter)
    infeasibility = float(x[art].sum())
    if infeasibility > 1e-7 * max(1.0, float(np.abs(b).max())):
        raise InfeasibleError(f"LP is infeasible (phase-1 residual {infeasibility:.3g})")
    # pin artificials at zero; any left basic stay degenerate
    hi[art] = 0.0
    x[art] = 0.0
    cost = np.zeros(N)
    cost[:n] = c
    it2 = _simplex(A, b, cost, lo, hi, basis, status, x, tol, max_iter)
    xs = np.clip(x[:n], lower, upper)
    return LPResult(xs, float(c @ xs), it1 + it2)
