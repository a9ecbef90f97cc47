"""Dense two-phase bounded-variable primal simplex.

Every row gets a slack ``s = A x`` bounded by the row bounds, so the working
system is ``[A  -I] (x, s) = 0`` with finite lower bounds on every column
(free columns are split). Phase 1 drives artificial columns to zero; phase 2
optimises the real cost. Dantzig pricing switches to Bland's rule after
``10 * columns`` degenerate pivots so that cycling cannot occur.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
import scipy.sparse as sp

from optiloop.errors import NumericalFailure
from optiloop.solver.backends import INFEASIBLE, OPTIMAL, UNBOUNDED, LPResult

PIVOT_TOL = 1e-9
REINVERT_EVERY = 64


class _Tableau:
    def __init__(self, M, b, lower, upper, basis, x, tol):
        self.M = M
        self.b = b
        self.lower = lower
        self.upper = upper
        self.basis = list(basis)
        self.x = x
        self.tol = tol
        self.m, self.n = M.shape
        self.is_basic = np.zeros(self.n, dtype=bool)
        self.is_basic[self.basis] = True
        self.iterations = 0
        self.reinvert()

    def reinvert(self):
        B = self.M[:, self.basis]
        try:
            self.T = np.linalg.solve(B, self.M)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular basis in simplex") from exc
        nonbasic = ~self.is_basic
        rhs = self.b - self.M[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = np.linalg.solve(B, rhs)

    def optimise(self, cost, max_iter):
        degenerate = 0
        bland = False
        since_inversion = 0
        while True:
            if self.iterations >= max_iter:
                raise NumericalFailure(f"simplex iteration limit {max_iter} reached")
            d = cost - cost[self.basis] @ self.T
            q, direction = self._entering(d, bland)
            if q is None:
                return OPTIMAL
            col = self.T[:, q] * direction
            theta, leave = self._ratio(q, col, bland)
            if theta is None:
                return UNBOUNDED
            self.iterations += 1
            if theta <= self.tol:
                degenerate += 1
                if degenerate > 10 * self.n:
                    bland = True
            self.x[q] += direction * theta
            self.x[self.basis] -= theta * col
            if leave is None:
                continue  # bound flip
            r, to_upper = leave
            out = self.basis[r]
            self.x[out] = self.upper[out] if to_upper else self.lower[out]
            self._pivot(r, q)
            since_inversion += 1
            if since_inversion >= REINVERT_EVERY:
                self.reinvert()
                since_inversion = 0

    def _entering(self, d, bland):
        at_lower = np.isclose(self.x, self.lower, atol=self.tol, rtol=0)
        movable = ~self.is_basic & (self.upper - self.lower > self.tol)
        can_up = movable & (d < -self.tol) & (self.x < self.upper - self.tol)
        can_down = movable & (d > self.tol) & ~at_lower
        gain = np.where(can_up | can_down, np.abs(d), 0.0)
        if not gain.any():
            return None, 0
        q = int(np.flatnonzero(gain)[0]) if bland else int(np.argmax(gain))
        return q, (1.0 if can_up[q] else -1.0)

    def _ratio(self, q, col, bland):
        best, leave = self.upper[q] - self.lower[q], None
        if not np.isfinite(best):
            best = None
        for r in range(self.m):
            alpha = col[r]
            j = self.basis[r]
            if alpha > PIVOT_TOL:
                limit, to_upper = (self.x[j] - self.lower[j]) / alpha, False
            elif alpha < -PIVOT_TOL and np.isfinite(self.upper[j]):
                limit, to_upper = (self.upper[j] - self.x[j]) / -alpha, True
            else:
                continue
            limit = max(limit, 0.0)
            if best is None or limit < best - self.tol:
                best, leave = limit, (r, to_upper)
            elif leave is not None and limit <= best + self.tol:
                # tie: Bland takes the smallest basic index, Dantzig the larger pivot
                if bland:
                    if j < self.basis[leave[0]]:
                        best, leave = min(best, limit), (r, to_upper)
                elif abs(alpha) > abs(col[leave[0]]):
                    best, leave = min(best, limit), (r, to_upper)
        return best, leave

    def _pivot(self, r, q):
        piv = self.T[r, q]
        self.T[r] /= piv
        factors = self.T[:, q].copy()
        factors[r] = 0.0
        self.T -= np.outer(factors, self.T[r])
        self.is_basic[self.basis[r]] = False
        self.is_basic[q] = True
        self.basis[r] = q


def bounded_simplex(cost, A, row_lo, row_hi, lb, ub, tol: float = 1e-9, max_iter: Optional[int] = None) -> LPResult:
    A = sp.csr_matrix(A).toarray() if sp.issparse(A) else np.atleast_2d(np.asarray(A, dtype=float))
    cost = np.asarray(cost, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    m, n = A.shape
    if np.any(lb > ub + tol) or np.any(np.asarray(row_lo) > np.asarray(row_hi) + tol):
        return LPResult(INFEASIBLE)

    # column transform: x = offset + sign * x' for finite-lower columns, split free ones
    blocks, costs, lows, ups, recover = [], [], [], [], []
    for j in range(n):
        if np.isfinite(lb[j]):
            recover.append([(len(lows), 1.0)])
            blocks.append(A[:, j])
            costs.append(cost[j])
            lows.append(lb[j])
            ups.append(ub[j])
        elif np.isfinite(ub[j]):
            recover.append([(len(lows), -1.0)])
            blocks.append(-A[:, j])
            costs.append(-cost[j])
            lows.append(-ub[j])
            ups.append(np.inf)
        else:
            recover.append([(len(lows), 1.0), (len(lows) + 1, -1.0)])
            blocks.extend([A[:, j], -A[:, j]])
            costs.extend([cost[j], -cost[j]])
            lows.extend([0.0, 0.0])
            ups.extend([np.inf, np.inf])
    n_struct = len(lows)

    # slack per row, bounded by the row bounds (free slack is split like a free column)
    slack_cols, slack_lo, slack_hi = [], [], []
    for r in range(m):
        lo, hi = row_lo[r], row_hi[r]
        e = np.zeros(m)
        e[r] = -1.0
        if np.isfinite(lo):
            slack_cols.append(e), slack_lo.append(lo), slack_hi.append(hi)
        elif np.isfinite(hi):
            slack_cols.append(-e), slack_lo.append(-hi), slack_hi.append(np.inf)
        else:
            continue  # row never binds
    cols = blocks + slack_cols
    M = np.column_stack(cols) if cols else np.zeros((m, 0))
    lower = np.array(lows + slack_lo, dtype=float)
    upper = np.array(ups + slack_hi, dtype=float)
    real = M.shape[1]

    x = lower.copy()
    resid = -(M @ x)
    signs = np.where(resid >= 0, 1.0, -1.0)
    M = np.hstack([M, np.diag(signs)])
    lower = np.concatenate([lower, np.zeros(m)])
    upper = np.concatenate([upper, np.full(m, np.inf)])
    x = np.concatenate([x, np.abs(resid)])
    b = np.zeros(m)
    limit = max_iter or 50 * (M.shape[1] + m) + 1000

    tab = _Tableau(M, b, lower, upper, range(real, real + m), x, tol)
    phase1 = np.concatenate([np.zeros(real), np.ones(m)])
    if tab.optimise(phase1, limit) != OPTIMAL:
        raise NumericalFailure("phase 1 unbounded")
    infeas = float(tab.x[real:].sum())
    scale = max(1.0, float(np.abs(lower[np.isfinite(lower)]).max(initial=0.0)))
    if infeas > 1e-7 * scale:
        return LPResult(INFEASIBLE, iterations=tab.iterations)

    tab.upper[real:] = 0.0
    tab.x[real:] = np.where(tab.is_basic[real:], tab.x[real:], 0.0)
    phase2 = np.concatenate([np.array(costs + [0.0] * (real - n_struct)), np.zeros(m)])
    status = tab.optimise(phase2, limit)
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED, iterations=tab.iterations)
    tab.reinvert()

    z = tab.x
    out = np.zeros(n)
    for j, parts in enumerate(recover):
        out[j] = sum(s * z[k] for k, s in parts)
    act = A @ out
    viol = max(
        float(np.max(np.maximum(np.asarray(row_lo) - act, 0.0), initial=0.0)),
        float(np.max(np.maximum(act - np.asarray(row_hi), 0.0), initial=0.0)),
    )
    if viol > 1e-6 * max(1.0, float(np.abs(act).max(initial=0.0))):
        raise NumericalFailure(f"simplex solution violates rows by {viol:.3g}")
    return LPResult(OPTIMAL, out, float(cost @ out), tab.iterations, None)
