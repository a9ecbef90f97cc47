"""Translate (logical graph, physical graph, energy model) into a linear
program with every node/link constraint and the energy objective.

Traffic columns (tau, t, p, h) are expressed in units of ``traffic_scale``
bit/s so that rows stay well scaled; :meth:`ProblemInstance.decode` converts
back to bit/s.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple, Union

import numpy as np
import scipy.sparse as sp

from optiloop.errors import InconsistentPolicy, ModelError
from optiloop.model import (
    Commodity,
    EnergyModel,
    LogicalGraph,
    PhysicalGraph,
    Solution,
    check_pair,
    commodities,
)

FLOW_IN = "FLOW_IN"
FLOW_OUT = "FLOW_OUT"
ENABLE_LINK = "ENABLE_LINK"
CAPACITY_L = "CAPACITY_L"
ENABLE_CORE = "ENABLE_CORE"
HONOR_DELTA = "HONOR_DELTA"
CAPACITY_C = "CAPACITY_C"
DELAY = "DELAY"
MATCH = "MATCH"
TAGS = (FLOW_IN, FLOW_OUT, ENABLE_LINK, CAPACITY_L, ENABLE_CORE, HONOR_DELTA, CAPACITY_C, DELAY, MATCH)

BINARY_KINDS = ("x", "y", "delta")
TRAFFIC_KINDS = ("tau", "t", "p", "h")


class Mode(Enum):
    RELAX = "relax"
    BINARY = "binary"


RELAX = Mode.RELAX
BINARY = Mode.BINARY

PolicyValue = Union[float, Mode]


@dataclass(frozen=True)
class VariablePolicy:
    """How each binary column is treated: fixed to 0/1, relaxed to [0, 1], or
    kept binary. Columns not listed fall back to ``default``."""

    entries: Mapping[tuple, PolicyValue] = field(default_factory=dict)
    default: PolicyValue = BINARY

    def __post_init__(self):
        for key, val in list(self.entries.items()) + [("default", self.default)]:
            if not isinstance(val, Mode) and val not in (0, 1):
                raise InconsistentPolicy(f"fix value for {key} must be 0 or 1, got {val!r}")

    def mode(self, key) -> PolicyValue:
        return self.entries.get(key, self.default)

    @classmethod
    def all_binary(cls) -> "VariablePolicy":
        return cls({}, BINARY)

    @classmethod
    def all_relaxed(cls) -> "VariablePolicy":
        return cls({}, RELAX)

    @classmethod
    def fix_all(cls, value: int) -> "VariablePolicy":
        return cls({}, value)


@dataclass(frozen=True)
class Column:
    key: tuple
    binary: bool


@dataclass(frozen=True)
class Row:
    tag: str
    index: tuple
    sense: str  # "<=" or "=="

    @property
    def id(self):
        return (self.tag,) + self.index


@dataclass(frozen=True)
class ProblemInstance:
    """An LP/MILP ``min cost.x + constant`` subject to ``A x (<= | ==) rhs``
    and column bounds. Immutable; :meth:`with_policy` returns a copy with new
    bounds and integrality flags sharing the matrix."""

    columns: Tuple[Column, ...]
    column_index: Mapping[tuple, int]
    rows: Tuple[Row, ...]
    A: sp.csr_matrix
    rhs: np.ndarray
    cost: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integral: np.ndarray
    constant: float = 0.0
    traffic_scale: float = 1.0
    aggregate: bool = False
    commodity_members: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def is_equality(self) -> np.ndarray:
        cached = self.__dict__.get("_eq_cache")
        if cached is None:
            cached = np.array([r.sense == "==" for r in self.rows], dtype=bool)
            object.__setattr__(self, "_eq_cache", cached)
        return cached

    def row_bounds(self):
        lo = np.where(self.is_equality, self.rhs, -np.inf)
        return lo, self.rhs.copy()

    def binary_columns(self) -> np.ndarray:
        cached = self.__dict__.get("_bin_cache")
        if cached is None:
            cached = np.array([n for n, col in enumerate(self.columns) if col.binary], dtype=int)
            object.__setattr__(self, "_bin_cache", cached)
        return cached

    def with_policy(self, policy: VariablePolicy) -> "ProblemInstance":
        lower = self.lower.copy()
        upper = self.upper.copy()
        integral = np.zeros(self.n_cols, dtype=bool)
        unknown = [
            k for k in policy.entries if k not in self.column_index or not self.columns[self.column_index[k]].binary
        ]
        if unknown:
            raise InconsistentPolicy(f"policy references unknown binary variables: {unknown[:5]}")
        for n in self.binary_columns():
            mode = policy.mode(self.columns[n].key)
            if mode is RELAX:
                lower[n], upper[n] = 0.0, 1.0
            elif mode is BINARY:
                lower[n], upper[n] = 0.0, 1.0
                integral[n] = True
            else:
                lower[n] = upper[n] = float(mode)
        return replace(self, lower=lower, upper=upper, integral=integral)

    def with_bounds(self, lower, upper, integral=None) -> "ProblemInstance":
        return replace(
            self,
            lower=np.asarray(lower, dtype=float),
            upper=np.asarray(upper, dtype=float),
            integral=self.integral.copy() if integral is None else np.asarray(integral, dtype=bool),
        )

    def objective_value(self, values: np.ndarray) -> float:
        return float(self.cost @ values) + self.constant

    def row_activity(self, values: np.ndarray) -> np.ndarray:
        return self.A @ values

    def max_violation(self, values: np.ndarray) -> float:
        act = self.row_activity(values)
        viol = np.where(self.is_equality, np.abs(act - self.rhs), np.maximum(act - self.rhs, 0.0))
        bound = np.maximum(self.lower - values, 0.0) + np.maximum(values - self.upper, 0.0)
        return float(max(viol.max(initial=0.0), bound.max(initial=0.0)))

    def rows_with_tag(self, tag: str) -> List[int]:
        return [n for n, r in enumerate(self.rows) if r.tag == tag]

    def decode(self, values: np.ndarray, objective: Optional[float] = None, zero_tol: float = 1e-12) -> Solution:
        sol = Solution(aggregate=self.aggregate)
        tables = {
            "x": sol.x,
            "y": sol.y,
            "delta": sol.delta,
            "tau": sol.tau,
            "t": sol.transit,
            "p": sol.processed,
            "h": sol.handoff,
        }
        scale = self.traffic_scale
        for col, val in zip(self.columns, values):
            if abs(val) <= zero_tol:
                continue
            kind = col.key[0]
            idx = col.key[1:] if len(col.key) > 2 else col.key[1]
            tables[kind][idx] = float(val) * scale if kind in TRAFFIC_KINDS else float(val)
        sol.objective = self.objective_value(values) if objective is None else float(objective)
        return sol


# --------------------------------------------------------------------------
# builder


class _Builder:
    def __init__(self):
        self.columns: List[Column] = []
        self.index: Dict[tuple, int] = {}
        self.cost: List[float] = []
        self.rows: List[Row] = []
        self.rhs: List[float] = []
        self.data: List[float] = []
        self.row_ind: List[int] = []
        self.col_ind: List[int] = []

    def col(self, key, binary=False, cost=0.0) -> int:
        n = self.index.get(key)
        if n is None:
            n = len(self.columns)
            self.index[key] = n
            self.columns.append(Column(key, binary))
            self.cost.append(cost)
        return n

    def row(self, tag, index, terms: Iterable[Tuple[int, float]], sense, rhs):
        merged: Dict[int, float] = {}
        for n, coef in terms:
            merged[n] = merged.get(n, 0.0) + coef
        merged = {n: c for n, c in merged.items() if c != 0.0}
        if not merged:
            if (sense == "==" and abs(rhs) > 0) or (sense == "<=" and rhs < 0):
                raise ModelError(f"{tag}{index} has no variables but cannot hold")
            return
        r = len(self.rows)
        self.rows.append(Row(tag, tuple(index), sense))
        self.rhs.append(float(rhs))
        for n in sorted(merged):
            self.row_ind.append(r)
            self.col_ind.append(n)
            self.data.append(merged[n])


def auto_traffic_scale(lg: LogicalGraph) -> float:
    peak = max(lg.injected_flows.values(), default=0.0)
    if peak <= 10.0:
        return 1.0
    return 10.0 ** math.floor(math.log10(peak))


def relevant_triples(comm: Commodity) -> List[Tuple[str, str]]:
    return [t for t, rate in comm.flows.items() if rate > 0]


def variable_pruning(lg: LogicalGraph, pg: PhysicalGraph, aggregate: bool = False) -> Set[tuple]:
    """Ids of tau/t/p variables the builder omits because their
    (commodity, v1, v2) carries no logical flow, or because their link cannot
    carry that commodity (links out of a foreign endpoint)."""
    comms = commodities(lg, aggregate)
    pruned = set()
    all_triples = [(v1, v2) for v1 in lg.vnfs for v2 in lg.vnfs]
    endpoints = set(pg.endpoints)
    for comm in comms:
        live = set(relevant_triples(comm))
        members = set(comm.members)
        for v1, v2 in all_triples:
            alive = (v1, v2) in live
            for (i, j) in pg.links:
                ok = alive and (i not in endpoints or (i in members and v1 == v2))
                if not ok:
                    pruned.add(("tau", i, j, comm.label, v1, v2))
            for c in pg.nodes:
                if not alive:
                    pruned.add(("t", c, comm.label, v1, v2))
                if not alive or pg.capacity(c) <= 0:
                    pruned.add(("p", c, comm.label, v1, v2))
    return pruned


def build(
    lg: LogicalGraph,
    pg: PhysicalGraph,
    em: EnergyModel,
    policy: Optional[VariablePolicy] = None,
    *,
    aggregate: bool = False,
    local_handoff: bool = True,
    traffic_scale: Optional[float] = None,
) -> ProblemInstance:
    """Build the joint node-activation / placement / routing model.

    ``aggregate`` merges endpoints with identical first-hop chi factors into a
    single commodity; it is refused when delay rows would be needed.
    ``local_handoff`` lets traffic produced by one VNF be consumed by the next
    VNF on the same node without leaving it.
    """
    check_pair(lg, pg)
    if aggregate and any(e in pg.max_delay for e in pg.endpoints):
        raise ModelError("endpoint aggregation cannot express per-endpoint delay limits")
    scale = auto_traffic_scale(lg) if traffic_scale is None else float(traffic_scale)
    comms = commodities(lg, aggregate)
    b = _Builder()
    endpoints = set(pg.endpoints)
    hosts = [c for c in pg.nodes if pg.capacity(c) > 0]
    host_set = set(hosts)

    # binaries first, in a fixed order
    for link in pg.links:
        b.col(("x",) + link, binary=True)
    for c in pg.nodes:
        b.col(("y", c), binary=True, cost=em.idle(c))
    for c in pg.nodes:
        for v in lg.vnfs:
            b.col(("delta", c, v), binary=True, cost=em.overhead(c, v))

    # traffic columns
    tau_on = {}  # (label, triple) -> list of (link, col)
    for comm in comms:
        members = set(comm.members)
        for v1, v2 in relevant_triples(comm):
            cols = []
            for (i, j) in pg.links:
                if i in endpoints and not (i in members and v1 == v2):
                    continue
                coef = em.link((i, j)) + (em.switch(i) if i not in endpoints else 0.0)
                cols.append(((i, j), b.col(("tau", i, j, comm.label, v1, v2), cost=coef * scale)))
            tau_on[(comm.label, (v1, v2))] = cols
            for c in pg.nodes:
                b.col(("t", c, comm.label, v1, v2))
                if c in host_set:
                    b.col(("p", c, comm.label, v1, v2), cost=em.proc(c) * lg.cpu(v2) * scale)
                    if local_handoff and v1 != v2:
                        b.col(("h", c, comm.label, v1, v2))

    idx = b.index
    by_link_in: Dict[Tuple[str, tuple, str], List[int]] = {}
    by_link_out: Dict[Tuple[str, tuple, str], List[int]] = {}
    on_link: Dict[tuple, List[int]] = {}
    for (label, triple), cols in tau_on.items():
        for (i, j), n in cols:
            by_link_out.setdefault((label, triple, i), []).append(n)
            by_link_in.setdefault((label, triple, j), []).append(n)
            on_link.setdefault((i, j), []).append(n)

    for comm in comms:
        label = comm.label
        triples = relevant_triples(comm)
        producers: Dict[str, List[Tuple[str, float]]] = {}  # v2 -> [(v1, chi)]
        for v1, v2 in triples:
            producers.setdefault(v2, []).append(v1)
        for c in pg.nodes:
            for v1, v2 in triples:
                terms = [(n, 1.0) for n in by_link_in.get((label, (v1, v2), c), [])]
                terms.append((idx[("t", c, label, v1, v2)], -1.0))
                if c in host_set:
                    terms.append((idx[("p", c, label, v1, v2)], -1.0))
                    if ("h", c, label, v1, v2) in idx:
                        terms.append((idx[("h", c, label, v1, v2)], 1.0))
                b.row(FLOW_IN, (c, label, v1, v2), terms, "==", 0.0)
            for v2, v3 in triples:
                terms = [(n, 1.0) for n in by_link_out.get((label, (v2, v3), c), [])]
                terms.append((idx[("t", c, label, v2, v3)], -1.0))
                if c in host_set and v2 != v3:
                    for v1 in producers.get(v2, ()):
                        ratio = comm.first_hop_chi.get((v2, v3), 0.0) if v1 == v2 else lg.chi.get((v1, v2, v3), 0.0)
                        if ratio:
                            terms.append((idx[("p", c, label, v1, v2)], -ratio))
                    if ("h", c, label, v2, v3) in idx:
                        terms.append((idx[("h", c, label, v2, v3)], 1.0))
                b.row(FLOW_OUT, (c, label, v2, v3), terms, "==", 0.0)

    # injection matching
    for comm in comms:
        for e in comm.members:
            for v in lg.vnfs:
                rate = lg.injection(e, v)
                if rate <= 0:
                    continue
                terms = [(idx[("tau",) + link + (comm.label, v, v)], 1.0) for link in pg.out_links(e)]
                if not terms:
                    raise ModelError(f"endpoint {e!r} injects traffic but has no outgoing link")
                b.row(MATCH, (e, v), terms, "==", rate / scale)

    # links
    for link in pg.links:
        i, j = link
        xn = idx[("x",) + link]
        for end in (i, j):
            if end in pg.node_capacity:
                b.row(ENABLE_LINK, (i, j, end), [(xn, 1.0), (idx[("y", end)], -1.0)], "<=", 0.0)
        terms = [(n, 1.0) for n in on_link.get(link, [])]
        terms.append((xn, -pg.links[link].bandwidth / scale))
        b.row(CAPACITY_L, (i, j), terms, "<=", 0.0)

    # nodes
    for c in pg.nodes:
        for v in lg.vnfs:
            b.row(ENABLE_CORE, (c, v), [(idx[("delta", c, v)], 1.0), (idx[("y", c)], -1.0)], "<=", 0.0)
    for comm in comms:
        for c in hosts:
            for v1, v2 in relevant_triples(comm):
                bound = _honor_delta_bound(pg.capacity(c), lg.cpu(v2), len(comm.members), aggregate)
                b.row(
                    HONOR_DELTA,
                    (c, comm.label, v1, v2),
                    [(idx[("p", c, comm.label, v1, v2)], 1.0), (idx[("delta", c, v2)], -bound / scale)],
                    "<=",
                    0.0,
                )
    for c in pg.nodes:
        terms = []
        rho = pg.rho(c)
        for comm in comms:
            for v1, v2 in relevant_triples(comm):
                if c in host_set and lg.cpu(v2):
                    terms.append((idx[("p", c, comm.label, v1, v2)], lg.cpu(v2)))
                if rho:
                    terms.extend((n, rho) for n in by_link_out.get((comm.label, (v1, v2), c), []))
        b.row(CAPACITY_C, (c,), terms, "<=", pg.capacity(c) / scale)

    # delay, only for endpoints with a finite limit and some traffic
    if not aggregate:
        for comm in comms:
            e = comm.label
            dmax = pg.max_delay.get(e)
            total = lg.total_injected(e)
            if dmax is None or total <= 0:
                continue
            terms = []
            for (label, triple), cols in tau_on.items():
                if label == e:
                    terms.extend((n, pg.links[link].delay) for link, n in cols)
            for c in hosts:
                for v1, v2 in relevant_triples(comm):
                    terms.append((idx[("p", c, e, v1, v2)], lg.delay(v2)))
            b.row(DELAY, (e,), terms, "<=", dmax * total / scale)

    n_rows, n_cols = len(b.rows), len(b.columns)
    A = sp.csr_matrix((b.data, (b.row_ind, b.col_ind)), shape=(n_rows, n_cols))
    is_bin = np.array([col.binary for col in b.columns], dtype=bool)
    upper = np.where(is_bin, 1.0, np.inf)
    inst = ProblemInstance(
        columns=tuple(b.columns),
        column_index=dict(b.index),
        rows=tuple(b.rows),
        A=A,
        rhs=np.array(b.rhs, dtype=float),
        cost=np.array(b.cost, dtype=float),
        lower=np.zeros(n_cols),
        upper=upper,
        integral=is_bin.copy(),
        traffic_scale=scale,
        aggregate=aggregate,
        commodity_members={comm.label: comm.members for comm in comms},
    )
    if not np.all(np.isfinite(A.data)) or not np.all(np.isfinite(inst.cost)):
        raise ModelError("non-finite coefficient in built instance")
    return inst if policy is None else inst.with_policy(policy)


def _honor_delta_bound(k: float, r: float, n_members: int, aggregate: bool) -> float:
    if not aggregate:
        return k
    loose = k * n_members
    return min(loose, k / r) if r > 0 else loose


# --------------------------------------------------------------------------
# LP interchange export

_NAME_OK = re.compile(r"[^A-Za-z0-9_!\"#$%&()/,.;?@`'{}|~]")


def _lp_name(key, used: Dict[str, int]) -> str:
    name = f"{key[0]}({','.join(str(k) for k in key[1:])})"
    name = _NAME_OK.sub("_", name)
    if name[0].isdigit() or name[0] in ".eE":
        name = "_" + name
    if name in used:
        used[name] += 1
        name = f"{name}#{used[name]}"
    else:
        used[name] = 0
    return name


def to_lp_format(p: ProblemInstance) -> str:
    """Render the instance in the textual LP-interchange format, one row per
    line, each preceded by a comment carrying its semantic tag."""
    used: Dict[str, int] = {}
    names = [_lp_name(col.key, used) for col in p.columns]
    out = [f"\\ traffic columns in units of {p.traffic_scale:g} bit/s", "Minimize"]
    out.append(" obj: " + _linear(((p.cost[n], names[n]) for n in range(p.n_cols) if p.cost[n] != 0.0), p.constant))
    out.append("Subject To")
    A = p.A.tocsr()
    for r, row in enumerate(p.rows):
        start, end = A.indptr[r], A.indptr[r + 1]
        terms = ((A.data[k], names[A.indices[k]]) for k in range(start, end))
        sense = "=" if row.sense == "==" else "<="
        out.append(f"\\ {row.tag} {','.join(str(i) for i in row.index)}")
        out.append(f" r{r}: {_linear(terms)} {sense} {_num(p.rhs[r])}")
    out.append("Bounds")
    for n, name in enumerate(names):
        lo, hi = p.lower[n], p.upper[n]
        if lo == hi:
            out.append(f" {name} = {_num(lo)}")
        elif math.isinf(hi):
            if lo != 0.0:
                out.append(f" {name} >= {_num(lo)}")
        else:
            out.append(f" {_num(lo)} <= {name} <= {_num(hi)}")
    binaries = [names[n] for n in range(p.n_cols) if p.integral[n]]
    if binaries:
        out.append("Binaries")
        out.extend(f" {name}" for name in binaries)
    out.append("End")
    return "\n".join(out) + "\n"


def _num(v: float) -> str:
    return repr(float(v))


def _linear(terms, constant: float = 0.0) -> str:
    parts = []
    for coef, name in terms:
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {_num(abs(coef))} {name}")
    if constant:
        parts.append(f"{'-' if constant < 0 else '+'} {_num(abs(constant))}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text
