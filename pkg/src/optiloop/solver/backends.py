"""LP engines behind a common ``solve`` call.

Both engines take ``min cost.x`` subject to ``row_lo <= A x <= row_hi`` and
``lb <= x <= ub`` and return an :class:`LPResult`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from optiloop.errors import NumericalFailure

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LPResult:
    status: str
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    iterations: int = 0
    row_duals: Optional[np.ndarray] = None


class LPBackend:
    name = "abstract"

    def solve(self, cost, A, row_lo, row_hi, lb, ub) -> LPResult:
        raise NotImplementedError


class HighsBackend(LPBackend):
    """Adapter for the HiGHS engine. Every call starts cold."""

    name = "highs"

    def __init__(self, presolve: bool = True, threads: int = 1):
        import highspy  # noqa: F401  (fail at construction, not mid-run)

        self.presolve = presolve
        self.threads = threads

    def solve(self, cost, A, row_lo, row_hi, lb, ub) -> LPResult:
        result = self._run(cost, A, row_lo, row_hi, lb, ub, self.presolve)
        if result is None:
            # presolve may only be able to say "infeasible or unbounded"
            result = self._run(cost, A, row_lo, row_hi, lb, ub, False)
        if result is None:
            raise NumericalFailure("HiGHS could not classify the LP")
        return result

    def _run(self, cost, A, row_lo, row_hi, lb, ub, presolve):
        import highspy

        inf = highspy.kHighsInf
        A = sp.csr_matrix(A)
        m, n = A.shape
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", self.threads)
        h.setOptionValue("presolve", "on" if presolve else "off")
        lp = highspy.HighsLp()
        lp.num_col_ = n
        lp.num_row_ = m
        lp.col_cost_ = np.asarray(cost, dtype=float)
        lp.col_lower_ = np.where(np.isinf(lb), -inf, lb).astype(float)
        lp.col_upper_ = np.where(np.isinf(ub), inf, ub).astype(float)
        lp.row_lower_ = np.where(np.isinf(row_lo), -inf, row_lo).astype(float)
        lp.row_upper_ = np.where(np.isinf(row_hi), inf, row_hi).astype(float)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kRowwise
        lp.a_matrix_.start_ = A.indptr.astype(np.int32)
        lp.a_matrix_.index_ = A.indices.astype(np.int32)
        lp.a_matrix_.value_ = A.data.astype(float)
        h.passModel(lp)
        h.run()
        status = h.getModelStatus()
        S = highspy.HighsModelStatus
        iters = int(h.getInfo().simplex_iteration_count)
        if status == S.kOptimal or (status == S.kModelEmpty):
            sol = h.getSolution()
            x = np.array(sol.col_value, dtype=float) if n else np.zeros(0)
            duals = np.array(sol.row_dual, dtype=float) if m else np.zeros(0)
            return LPResult(OPTIMAL, x, float(np.dot(cost, x)), iters, duals)
        if status == S.kInfeasible:
            return LPResult(INFEASIBLE, iterations=iters)
        if status == S.kUnbounded:
            return LPResult(UNBOUNDED, iterations=iters)
        if status == S.kUnboundedOrInfeasible and presolve:
            return None
        raise NumericalFailure(f"HiGHS returned {h.modelStatusToString(status)}")


class SimplexBackend(LPBackend):
    """Built-in dense bounded-variable simplex; fine for desk-scale models."""

    name = "simplex"

    def __init__(self, tol: float = 1e-9, max_iter: Optional[int] = None):
        self.tol = tol
        self.max_iter = max_iter

    def solve(self, cost, A, row_lo, row_hi, lb, ub) -> LPResult:
        from optiloop.solver.simplex import bounded_simplex

        return bounded_simplex(cost, A, row_lo, row_hi, lb, ub, tol=self.tol, max_iter=self.max_iter)


_default = None


def default_backend() -> LPBackend:
    global _default
    if _default is None:
        try:
            _default = HighsBackend()
        except ImportError:
            _default = SimplexBackend()
    return _default
