"""LP solving, infeasibility analysis and the exact small-scale MILP oracle."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from optiloop.errors import BudgetExceeded, ModelError, NumericalFailure
from optiloop.milp import ProblemInstance
from optiloop.model import BINARY_TOL, Solution
from optiloop.solver.backends import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    HighsBackend,
    LPBackend,
    LPResult,
    SimplexBackend,
    default_backend,
)

FEAS_TOL = 1e-6
DEFAULT_BINARY_CAP = 24

_STATUS = {OPTIMAL: "Optimal", INFEASIBLE: "Infeasible", UNBOUNDED: "Unbounded"}


@dataclass
class SolveStats:
    """Counters shared by the calls that receive it."""

    lp: int = 0
    iis_lp: int = 0


@dataclass
class SolveReport:
    status: str  # "Optimal" | "Infeasible" | "Unbounded"
    solution: Optional[Solution] = None
    objective: Optional[float] = None
    iterations: int = 0
    values: Optional[np.ndarray] = None
    proven: bool = True
    nodes: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "Optimal"


@dataclass(frozen=True)
class IIS:
    rows: Tuple[tuple, ...]  # row ids: (tag, *indices)
    positions: Tuple[int, ...] = field(default=(), compare=False)

    @property
    def tags(self) -> frozenset:
        return frozenset(r[0] for r in self.rows)

    def __len__(self):
        return len(self.rows)


def _run(p: ProblemInstance, backend: Optional[LPBackend], lower=None, upper=None, rows=None, cost=None) -> LPResult:
    backend = backend or default_backend()
    lo, hi = p.row_bounds()
    A = p.A
    if rows is not None:
        rows = np.asarray(rows, dtype=int)
        A, lo, hi = A[rows], lo[rows], hi[rows]
    return backend.solve(
        p.cost if cost is None else cost,
        A,
        lo,
        hi,
        p.lower if lower is None else lower,
        p.upper if upper is None else upper,
    )


def solve_lp(p: ProblemInstance, backend: Optional[LPBackend] = None, stats: Optional[SolveStats] = None) -> SolveReport:
    """Solve an instance whose binaries are all fixed or relaxed."""
    if p.integral.any():
        raise ModelError("solve_lp needs every binary fixed or relaxed")
    res = _run(p, backend)
    if stats is not None:
        stats.lp += 1
    return _report(p, res)


def _report(p: ProblemInstance, res: LPResult) -> SolveReport:
    if res.status != OPTIMAL:
        return SolveReport(_STATUS[res.status], iterations=res.iterations)
    values = np.clip(res.x, p.lower, p.upper)
    viol = p.max_violation(values)
    if viol > FEAS_TOL * max(1.0, float(np.abs(p.rhs).max(initial=0.0))):
        raise NumericalFailure(f"LP solution violates rows by {viol:.3g}")
    obj = p.objective_value(values)
    return SolveReport("Optimal", p.decode(values, obj), obj, res.iterations, values)


# --------------------------------------------------------------------------
# infeasibility analysis


def _feasible(p, rows, backend, stats) -> bool:
    if stats is not None:
        stats.iis_lp += 1
    if len(rows) == 0:
        return bool(np.all(p.lower <= p.upper))
    res = _run(p, backend, rows=rows, cost=np.zeros(p.n_cols))
    return res.status != INFEASIBLE


def _elastic_support(p: ProblemInstance, backend) -> Optional[List[int]]:
    """Rows carrying a nonzero dual in the phase-one (elastic) LP. They form
    the support of an infeasibility certificate, which is usually small."""
    m, n = p.A.shape
    eq = p.is_equality
    n_eq = int(eq.sum())
    slack_up = -sp.identity(m, format="csr")
    slack_dn = sp.csr_matrix((np.ones(n_eq), (np.flatnonzero(eq), np.arange(n_eq))), shape=(m, n_eq))
    A = sp.hstack([p.A, slack_up, slack_dn], format="csr")
    cost = np.concatenate([np.zeros(n), np.ones(m + n_eq)])
    lower = np.concatenate([p.lower, np.zeros(m + n_eq)])
    upper = np.concatenate([p.upper, np.full(m + n_eq, np.inf)])
    lo, hi = p.row_bounds()
    res = backend.solve(cost, A, lo, hi, lower, upper)
    if res.status != OPTIMAL or res.row_duals is None or res.objective <= 1e-9:
        return None
    scale = max(1e-12, float(np.abs(res.row_duals).max()))
    return [int(r) for r in np.flatnonzero(np.abs(res.row_duals) > 1e-9 * scale)]


def compute_iis(p: ProblemInstance, backend: Optional[LPBackend] = None, stats: Optional[SolveStats] = None) -> IIS:
    """Deletion filter over rows: drop each row in turn and keep it dropped
    while the rest stays infeasible. Column bounds always stay in force."""
    backend = backend or default_backend()
    p = p.with_bounds(p.lower, p.upper, np.zeros(p.n_cols, dtype=bool))
    candidate = _elastic_support(p, backend)
    if candidate is None or _feasible(p, candidate, backend, stats):
        candidate = list(range(p.n_rows))
        if _feasible(p, candidate, backend, stats):
            raise ModelError("compute_iis called on a feasible instance")
    keep = list(candidate)
    for r in list(candidate):
        trial = [k for k in keep if k != r]
        if not _feasible(p, trial, backend, stats):
            keep = trial
    return IIS(tuple(p.rows[k].id for k in keep), tuple(keep))


# --------------------------------------------------------------------------
# exact MILP oracle


def _free_binaries(p: ProblemInstance) -> np.ndarray:
    return np.array([n for n in np.flatnonzero(p.integral) if p.lower[n] < p.upper[n]], dtype=int)


def _fractional(values, cols) -> np.ndarray:
    v = values[cols]
    return cols[np.minimum(np.abs(v), np.abs(1.0 - v)) > BINARY_TOL]


def _branch_column(p: ProblemInstance, values, frac) -> int:
    def score(n):
        dist = abs(values[n] - 0.5)
        return (0 if p.columns[n].key[0] == "y" else 1, dist, n)

    return min(frac, key=score)


def _fixed_solve(p, lower, upper, cols, assignment, backend, stats):
    lo, hi = lower.copy(), upper.copy()
    lo[cols] = hi[cols] = assignment
    res = _run(p, backend, lower=lo, upper=hi)
    stats.lp += 1
    return res


def solve_exact(
    p: ProblemInstance,
    node_limit: int = 100_000,
    binary_cap: int = DEFAULT_BINARY_CAP,
    backend: Optional[LPBackend] = None,
    stats: Optional[SolveStats] = None,
) -> SolveReport:
    """Best-first branch and bound with LP bounds.

    Nodes whose bound is no better than the incumbent are pruned. Fractional
    LP points are also rounded up as a cheap incumbent candidate.
    """
    stats = stats if stats is not None else SolveStats()
    free = _free_binaries(p)
    if len(free) > binary_cap:
        raise ModelError(f"{len(free)} free binaries exceed the cap of {binary_cap}")
    relaxed = p.with_bounds(p.lower, p.upper, np.zeros(p.n_cols, dtype=bool))

    best_obj, best_x = np.inf, None
    counter = itertools.count()
    nodes = 0

    def offer(res: LPResult):
        nonlocal best_obj, best_x
        if res.status == OPTIMAL:
            obj = relaxed.objective_value(res.x)
            if obj < best_obj - 1e-12 * max(1.0, abs(best_obj) if np.isfinite(best_obj) else 1.0):
                best_obj, best_x = obj, np.clip(res.x, p.lower, p.upper)

    def evaluate(lower, upper):
        nonlocal nodes
        nodes += 1
        stats.lp += 1
        return _run(relaxed, backend, lower=lower, upper=upper)

    root = evaluate(p.lower, p.upper)
    if root.status == UNBOUNDED:
        return SolveReport("Unbounded", nodes=nodes)
    heap = []
    if root.status == OPTIMAL:
        heapq.heappush(heap, (root.objective + p.constant, next(counter), p.lower.copy(), p.upper.copy(), root))

    def pruned(bound):
        return np.isfinite(best_obj) and bound >= best_obj - 1e-9 * max(1.0, abs(best_obj))

    while heap:
        bound, _, lower, upper, res = heapq.heappop(heap)
        if pruned(bound):
            continue
        frac = _fractional(res.x, free)
        if len(frac) == 0:
            # snap binaries exactly and clean the continuous part
            assign = np.round(res.x[free])
            offer(_fixed_solve(relaxed, lower, upper, free, assign, backend, stats))
            continue
        up = np.where(res.x[free] > BINARY_TOL, 1.0, np.round(res.x[free]))
        offer(_fixed_solve(relaxed, lower, upper, free, up, backend, stats))
        n = _branch_column(p, res.x, frac)
        for value in (1.0, 0.0):
            if nodes >= node_limit:
                report = _exact_report(p, best_obj, best_x, nodes, proven=False)
                raise BudgetExceeded(f"node limit {node_limit} reached", report)
            lo, hi = lower.copy(), upper.copy()
            lo[n] = hi[n] = value
            child = evaluate(lo, hi)
            if child.status == OPTIMAL and not pruned(child.objective + p.constant):
                heapq.heappush(heap, (child.objective + p.constant, next(counter), lo, hi, child))
    return _exact_report(p, best_obj, best_x, nodes, proven=True)


def _exact_report(p, best_obj, best_x, nodes, proven) -> SolveReport:
    if best_x is None:
        return SolveReport("Infeasible", nodes=nodes, proven=proven)
    return SolveReport("Optimal", p.decode(best_x, best_obj), best_obj, 0, best_x, proven, nodes)


def enumerate_exact(
    p: ProblemInstance,
    max_binaries: int = 12,
    backend: Optional[LPBackend] = None,
    stats: Optional[SolveStats] = None,
) -> SolveReport:
    """Plain 2^n enumeration of the free binaries, no pruning."""
    stats = stats if stats is not None else SolveStats()
    free = _free_binaries(p)
    if len(free) > max_binaries:
        raise ModelError(f"{len(free)} free binaries exceed the enumeration limit {max_binaries}")
    relaxed = p.with_bounds(p.lower, p.upper, np.zeros(p.n_cols, dtype=bool))
    best_obj, best_x = np.inf, None
    for bits in itertools.product((0.0, 1.0), repeat=len(free)):
        res = _fixed_solve(relaxed, p.lower, p.upper, free, np.array(bits), backend, stats)
        if res.status == OPTIMAL:
            obj = relaxed.objective_value(res.x)
            if obj < best_obj:
                best_obj, best_x = obj, np.clip(res.x, p.lower, p.upper)
    return _exact_report(p, best_obj, best_x, 2 ** len(free), True)


__all__ = [
    "FEAS_TOL",
    "HighsBackend",
    "IIS",
    "LPBackend",
    "SimplexBackend",
    "SolveReport",
    "SolveStats",
    "compute_iis",
    "default_backend",
    "enumerate_exact",
    "solve_exact",
    "solve_lp",
]
