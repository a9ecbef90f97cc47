"""Independent feasibility check of a Solution against the model.

Works from the domain objects only and never looks at the LP matrix, so it can
catch builder and solver mistakes alike.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import List, Optional

from optiloop.model import (
    BINARY_TOL,
    EnergyModel,
    LogicalGraph,
    PhysicalGraph,
    Solution,
    commodities,
    total_energy,
)


@dataclass(frozen=True)
class Violation:
    tag: str
    index: tuple
    amount: float

    def __str__(self):
        return f"{self.tag}{self.index}: off by {self.amount:.6g}"


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def tags(self) -> set:
        return {v.tag for v in self.violations}

    def __str__(self):
        if self.ok:
            return "ok"
        return "; ".join(str(v) for v in self.violations[:10])


def validate(
    sol: Solution,
    lg: LogicalGraph,
    pg: PhysicalGraph,
    em: Optional[EnergyModel] = None,
    cfg=None,
    tol: float = 1e-6,
    require_integral: bool = True,
) -> ValidationReport:
    """Check every constraint family on ``sol``. ``cfg`` (a NetworkConfig)
    additionally requires the binaries to match it; ``em`` requires the stored
    objective to equal the re-evaluated energy."""
    out: List[Violation] = []

    def check_le(tag, index, lhs, rhs, scale):
        excess = lhs - rhs
        if excess > tol * max(1.0, scale):
            out.append(Violation(tag, index, excess))

    def check_eq(tag, index, lhs, rhs, scale):
        gap = abs(lhs - rhs)
        if gap > tol * max(1.0, scale):
            out.append(Violation(tag, index, gap))

    nodes = set(pg.nodes)
    endpoints = set(pg.endpoints)
    x = {link: sol.x.get(link, 0.0) for link in pg.links}
    y = {c: sol.y.get(c, 0.0) for c in pg.nodes}

    # binaries
    for name, table in (("x", sol.x), ("y", sol.y), ("delta", sol.delta)):
        for key, val in table.items():
            if val < -tol or val > 1 + tol:
                out.append(Violation("BOUNDS", (name, key), val))
            elif require_integral and min(abs(val), abs(1 - val)) > BINARY_TOL:
                out.append(Violation("INTEGRALITY", (name, key), val))
    for link in sol.x:
        if link not in pg.links:
            out.append(Violation("UNKNOWN", ("x",) + tuple(link), sol.x[link]))
    for (c, v) in sol.delta:
        if c not in nodes or v not in lg.vnfs:
            out.append(Violation("UNKNOWN", ("delta", c, v), sol.delta[(c, v)]))

    comms = {comm.label: comm for comm in commodities(lg, sol.aggregate)}

    # traffic variables must be nonnegative and reference real entities
    for name, table in (("tau", sol.tau), ("t", sol.transit), ("p", sol.processed), ("h", sol.handoff)):
        for key, val in table.items():
            if val < -tol * max(1.0, abs(val)):
                out.append(Violation("BOUNDS", (name,) + key, val))
            label = key[-3]
            if label not in comms:
                out.append(Violation("UNKNOWN", (name,) + key, val))
    for (i, j, label, v1, v2), val in sol.tau.items():
        if (i, j) not in pg.links:
            out.append(Violation("UNKNOWN", ("tau", i, j, label, v1, v2), val))
        elif i in endpoints and label in comms:
            if v1 != v2 or i not in comms[label].members:
                out.append(Violation("ROUTING", ("tau", i, j, label, v1, v2), val))
    for (c, label, v1, v2), val in sol.processed.items():
        if pg.capacity(c) <= 0 and val > tol:
            out.append(Violation("CAPACITY_C", (c, "no capability", v2), val))

    # enable-link, enable-core
    for (i, j), xv in x.items():
        for end in (i, j):
            if end in nodes:
                check_le("ENABLE_LINK", (i, j, end), xv, y[end], 1.0)
    for (c, v), dv in sol.delta.items():
        if c in nodes:
            check_le("ENABLE_CORE", (c, v), dv, y.get(c, 0.0), 1.0)

    # link capacity
    load = defaultdict(float)
    for (i, j, _, _, _), val in sol.tau.items():
        load[(i, j)] += val
    for link, used in load.items():
        if link in pg.links:
            cap = pg.links[link].bandwidth * x.get(link, 0.0)
            check_le("CAPACITY_L", link, used, cap, pg.links[link].bandwidth)

    # honor-delta and node capacity
    for (c, label, v1, v2), val in sol.processed.items():
        if c not in nodes or label not in comms:
            continue
        k = pg.capacity(c)
        bound = k
        if sol.aggregate:
            n = len(comms[label].members)
            r = lg.cpu(v2)
            bound = min(k * n, k / r) if r > 0 else k * n
        check_le("HONOR_DELTA", (c, label, v1, v2), val, bound * sol.delta.get((c, v2), 0.0), bound)
    used = defaultdict(float)
    for (c, _, _, v2), val in sol.processed.items():
        used[c] += lg.cpu(v2) * val
    for (i, _, _, _, _), val in sol.tau.items():
        if i in nodes:
            used[i] += pg.rho(i) * val
    for c in pg.nodes:
        check_le("CAPACITY_C", (c,), used[c], pg.capacity(c), pg.capacity(c))

    # conservation and matching, per commodity
    tau_in = defaultdict(float)
    tau_out = defaultdict(float)
    for (i, j, label, v1, v2), val in sol.tau.items():
        tau_out[(i, label, v1, v2)] += val
        tau_in[(j, label, v1, v2)] += val
    for label, comm in comms.items():
        triples = [t for t, rate in comm.flows.items() if rate > 0]
        live = set(triples)
        producers = defaultdict(list)
        for v1, v2 in triples:
            producers[v2].append(v1)
        for c in pg.nodes:
            for v1, v2 in triples:
                key = (c, label, v1, v2)
                lhs = tau_in[key] + sol.handoff.get(key, 0.0)
                rhs = sol.transit.get(key, 0.0) + sol.processed.get(key, 0.0)
                check_eq("FLOW_IN", key, lhs, rhs, max(lhs, rhs))
            for v2, v3 in triples:
                key = (c, label, v2, v3)
                made = 0.0
                if v2 != v3:
                    for v1 in producers[v2]:
                        ratio = comm.first_hop_chi.get((v2, v3), 0.0) if v1 == v2 else lg.chi.get((v1, v2, v3), 0.0)
                        made += ratio * sol.processed.get((c, label, v1, v2), 0.0)
                lhs = tau_out[key] + sol.handoff.get(key, 0.0)
                rhs = sol.transit.get(key, 0.0) + made
                check_eq("FLOW_OUT", key, lhs, rhs, max(lhs, rhs))
        # every unit of logical flow is processed exactly once
        done = defaultdict(float)
        for (c, lab, v1, v2), val in sol.processed.items():
            if lab == label:
                done[(v1, v2)] += val
        for triple in set(done) | live:
            want = comm.flows.get(triple, 0.0)
            check_eq("PROCESSED", (label,) + triple, done[triple], want, want)
        for e in comm.members:
            for v in lg.vnfs:
                rate = lg.injection(e, v)
                sent = sum(sol.tau.get(link + (label, v, v), 0.0) for link in pg.out_links(e))
                check_eq("MATCH", (e, v), sent, rate, rate)

    # delay
    if not sol.aggregate:
        for e, dmax in pg.max_delay.items():
            total = lg.total_injected(e)
            if total <= 0 or e not in comms:
                continue
            spent = sum(pg.links[(i, j)].delay * val for (i, j, lab, _, _), val in sol.tau.items() if lab == e)
            spent += sum(lg.delay(v2) * val for (_, lab, _, v2), val in sol.processed.items() if lab == e)
            check_le("DELAY", (e,), spent / total, dmax, dmax)

    if cfg is not None:
        want_x = {link: 1.0 if link in cfg.active_links else 0.0 for link in pg.links}
        want_y = {c: 1.0 if c in cfg.active_nodes else 0.0 for c in pg.nodes}
        for link, val in want_x.items():
            if abs(sol.x.get(link, 0.0) - val) > BINARY_TOL:
                out.append(Violation("CONFIG", ("x",) + link, sol.x.get(link, 0.0)))
        for c, val in want_y.items():
            if abs(sol.y.get(c, 0.0) - val) > BINARY_TOL:
                out.append(Violation("CONFIG", ("y", c), sol.y.get(c, 0.0)))
        for c in pg.nodes:
            for v in lg.vnfs:
                val = 1.0 if (c, v) in cfg.placements else 0.0
                if abs(sol.delta.get((c, v), 0.0) - val) > BINARY_TOL:
                    out.append(Violation("CONFIG", ("delta", c, v), sol.delta.get((c, v), 0.0)))

    if em is not None:
        energy = total_energy(sol, em, pg, lg)
        check_eq("OBJECTIVE", (), sol.objective, energy, abs(energy))

    return ValidationReport(out)
