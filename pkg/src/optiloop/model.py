"""Domain types: logical graph (demand), physical graph (supply), energy model
and solutions, plus derivation of every logical flow from the chi factors."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Tuple, Union

from optiloop.errors import CyclicLogicalGraph, ModelError

Link = Tuple[str, str]
Triple = Tuple[str, str]  # (last visited VNF, next VNF); (v, v) marks injected traffic

BINARY_TOL = 1e-6


@dataclass(frozen=True)
class LogicalGraph:
    """Demand side.

    ``chi`` is keyed by ``(origin, v2, v3)`` where ``origin`` is either a VNF or
    an endpoint; an endpoint origin describes how traffic injected by that
    endpoint is transformed at its first VNF ``v2``.
    """

    endpoints: Tuple[str, ...]
    vnfs: Tuple[str, ...]
    injected_flows: Mapping[Tuple[str, str], float]
    chi: Mapping[Tuple[str, str, str], float]
    processing_delay: Mapping[str, float] = field(default_factory=dict)
    per_unit_cpu: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "endpoints", tuple(self.endpoints))
        object.__setattr__(self, "vnfs", tuple(self.vnfs))
        ends, vnfs = set(self.endpoints), set(self.vnfs)
        if len(ends) != len(self.endpoints) or len(vnfs) != len(self.vnfs):
            raise ModelError("duplicate endpoint or VNF identifier")
        if ends & vnfs:
            raise ModelError(f"identifiers used both as endpoint and VNF: {sorted(ends & vnfs)}")
        for (e, v), rate in self.injected_flows.items():
            if e not in ends:
                raise ModelError(f"injected flow from unknown endpoint {e!r}")
            if v not in vnfs:
                raise ModelError(f"injected flow into unknown VNF {v!r}")
            if not (rate >= 0 and math.isfinite(rate)):
                raise ModelError(f"injected flow l({e},{v}) must be finite and >= 0")
        for (o, v2, v3), ratio in self.chi.items():
            if o not in vnfs and o not in ends:
                raise ModelError(f"chi origin {o!r} is neither VNF nor endpoint")
            if v2 not in vnfs or v3 not in vnfs:
                raise ModelError(f"chi({o},{v2},{v3}) references unknown VNF")
            if not (ratio >= 0 and math.isfinite(ratio)):
                raise ModelError(f"chi({o},{v2},{v3}) must be finite and >= 0")
        for name, table in (("processing_delay", self.processing_delay), ("per_unit_cpu", self.per_unit_cpu)):
            for v, val in table.items():
                if v not in vnfs:
                    raise ModelError(f"{name} for unknown VNF {v!r}")
                if not (val >= 0 and math.isfinite(val)):
                    raise ModelError(f"{name}[{v}] must be finite and >= 0")

    def cpu(self, v: str) -> float:
        return self.per_unit_cpu.get(v, 1.0)

    def delay(self, v: str) -> float:
        return self.processing_delay.get(v, 0.0)

    def injection(self, e: str, v: str) -> float:
        return self.injected_flows.get((e, v), 0.0)

    def total_injected(self, e: str) -> float:
        return sum(rate for (e2, _), rate in self.injected_flows.items() if e2 == e)

    def scaled(self, factor: float) -> "LogicalGraph":
        """Copy with every injected flow multiplied by ``factor``."""
        if not factor > 0:
            raise ModelError("traffic multiplier must be > 0")
        return LogicalGraph(
            endpoints=self.endpoints,
            vnfs=self.vnfs,
            injected_flows={k: r * factor for k, r in self.injected_flows.items()},
            chi=dict(self.chi),
            processing_delay=dict(self.processing_delay),
            per_unit_cpu=dict(self.per_unit_cpu),
        )


@dataclass(frozen=True)
class LinkSpec:
    bandwidth: float
    delay: float = 0.0


@dataclass(frozen=True)
class PhysicalGraph:
    """Supply side: endpoints, B/F nodes and directed capacitated links."""

    endpoints: Tuple[str, ...]
    nodes: Tuple[str, ...]
    node_capacity: Mapping[str, float]
    links: Mapping[Link, LinkSpec]
    switch_cpu_per_unit: Mapping[str, float] = field(default_factory=dict)
    max_delay: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "endpoints", tuple(self.endpoints))
        object.__setattr__(self, "nodes", tuple(self.nodes))
        ends, nodes = set(self.endpoints), set(self.nodes)
        if len(ends) != len(self.endpoints) or len(nodes) != len(self.nodes):
            raise ModelError("duplicate endpoint or node identifier")
        if ends & nodes:
            raise ModelError(f"identifiers used both as endpoint and node: {sorted(ends & nodes)}")
        for c in self.nodes:
            if c not in self.node_capacity:
                raise ModelError(f"node {c!r} has no capacity")
        for c, k in self.node_capacity.items():
            if c not in nodes:
                raise ModelError(f"capacity for unknown node {c!r}")
            if not (k >= 0 and math.isfinite(k)):
                raise ModelError(f"k({c}) must be finite and >= 0")
        for c, rho in self.switch_cpu_per_unit.items():
            if c not in nodes or not (rho >= 0 and math.isfinite(rho)):
                raise ModelError(f"invalid switching cost for {c!r}")
        for (i, j), spec in self.links.items():
            if i == j:
                raise ModelError(f"self-loop link ({i},{j})")
            for end in (i, j):
                if end not in nodes and end not in ends:
                    raise ModelError(f"link ({i},{j}) references unknown vertex {end!r}")
            if j in ends:
                raise ModelError(f"link ({i},{j}) ends at an endpoint; endpoints only inject traffic")
            if not (spec.bandwidth > 0 and math.isfinite(spec.bandwidth)):
                raise ModelError(f"bandwidth of ({i},{j}) must be finite and > 0")
            if not (spec.delay >= 0 and math.isfinite(spec.delay)):
                raise ModelError(f"delay of ({i},{j}) must be finite and >= 0")
        for e, dmax in self.max_delay.items():
            if e not in ends or not dmax >= 0:
                raise ModelError(f"invalid max delay for {e!r}")

    def capacity(self, c: str) -> float:
        return self.node_capacity[c]

    def rho(self, c: str) -> float:
        return self.switch_cpu_per_unit.get(c, 0.0)

    def is_node(self, vertex: str) -> bool:
        return vertex in self._node_set

    @property
    def _node_set(self):
        cached = self.__dict__.get("_nodes_cache")
        if cached is None:
            cached = frozenset(self.nodes)
            object.__setattr__(self, "_nodes_cache", cached)
        return cached

    def out_links(self, vertex: str) -> List[Link]:
        return self._adjacency()[0].get(vertex, [])

    def in_links(self, vertex: str) -> List[Link]:
        return self._adjacency()[1].get(vertex, [])

    def _adjacency(self):
        cached = self.__dict__.get("_adj_cache")
        if cached is None:
            out, inc = defaultdict(list), defaultdict(list)
            for link in self.links:
                out[link[0]].append(link)
                inc[link[1]].append(link)
            cached = (dict(out), dict(inc))
            object.__setattr__(self, "_adj_cache", cached)
        return cached


Coefficient = Union[float, Mapping]


@dataclass(frozen=True)
class EnergyModel:
    """Affine energy terms: a fixed charge gated by the binary variable plus a
    slope times the load. All quantities in watts (slopes in J per unit)."""

    idle_power: Mapping[str, float]
    proc_energy_per_cpu: Coefficient
    switch_energy_per_unit: Coefficient = 0.0
    link_energy_per_unit: Coefficient = 0.0
    vnf_overhead_power: Mapping[Tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        tables = [
            ("idle_power", self.idle_power),
            ("vnf_overhead_power", self.vnf_overhead_power),
            ("proc_energy_per_cpu", self.proc_energy_per_cpu),
            ("switch_energy_per_unit", self.switch_energy_per_unit),
            ("link_energy_per_unit", self.link_energy_per_unit),
        ]
        for name, table in tables:
            values = table.values() if isinstance(table, Mapping) else [table]
            for val in values:
                if not (val >= 0 and math.isfinite(val)):
                    raise ModelError(f"{name} coefficients must be finite and >= 0")

    def idle(self, c: str) -> float:
        return self.idle_power.get(c, 0.0)

    def overhead(self, c: str, v: str) -> float:
        return self.vnf_overhead_power.get((c, v), 0.0)

    def proc(self, c: str) -> float:
        return _lookup(self.proc_energy_per_cpu, c)

    def switch(self, c: str) -> float:
        return _lookup(self.switch_energy_per_unit, c)

    def link(self, link: Link) -> float:
        return _lookup(self.link_energy_per_unit, link)


def _lookup(coef, key) -> float:
    if isinstance(coef, Mapping):
        return coef.get(key, 0.0)
    return float(coef)


@dataclass
class Solution:
    """Values of all model variables. Sparse: absent keys read as 0.

    ``tau`` is keyed ``(i, j, commodity, v1, v2)``; the other traffic maps are
    keyed ``(c, commodity, v1, v2)``. A commodity is an endpoint, or a class of
    endpoints when the instance was built with endpoint aggregation.
    """

    x: Dict[Link, float] = field(default_factory=dict)
    y: Dict[str, float] = field(default_factory=dict)
    delta: Dict[Tuple[str, str], float] = field(default_factory=dict)
    tau: Dict[Tuple[str, str, str, str, str], float] = field(default_factory=dict)
    transit: Dict[Tuple[str, str, str, str], float] = field(default_factory=dict)
    processed: Dict[Tuple[str, str, str, str], float] = field(default_factory=dict)
    handoff: Dict[Tuple[str, str, str, str], float] = field(default_factory=dict)
    objective: float = 0.0
    aggregate: bool = False

    @property
    def integral(self) -> bool:
        for table in (self.x, self.y, self.delta):
            for val in table.values():
                if min(abs(val), abs(val - 1.0)) > BINARY_TOL:
                    return False
        return True

    def link_load(self) -> Dict[Link, float]:
        load: Dict[Link, float] = defaultdict(float)
        for (i, j, _, _, _), val in self.tau.items():
            load[(i, j)] += val
        return dict(load)


# --------------------------------------------------------------------------
# logical flows


def derive_logical_flows(lg: LogicalGraph) -> Dict[Tuple[str, str, str], float]:
    """Every inter-VNF logical flow l(e, v1, v2), following the generalized
    conservation law in topological order of the chi-induced graph."""
    by_stage = defaultdict(list)  # v2 -> [(origin, v3, chi)]
    for (o, v2, v3), ratio in lg.chi.items():
        if ratio > 0:
            by_stage[v2].append((o, v3, ratio))

    flows: Dict[Tuple[str, str, str], float] = {}
    for e in lg.endpoints:
        seeds = [v for v in lg.vnfs if lg.injection(e, v) > 0]
        order = _topological_order(e, seeds, by_stage, lg.vnfs)
        inflow = defaultdict(dict)  # v2 -> {v1: l(e, v1, v2)}
        for v2 in order:
            inj = lg.injection(e, v2)
            for o, v3, ratio in by_stage.get(v2, ()):
                if o == e:
                    amount = inj * ratio
                elif o in inflow[v2]:
                    amount = inflow[v2][o] * ratio
                else:
                    continue
                if amount > 0:
                    inflow[v3][v2] = inflow[v3].get(v2, 0.0) + amount
        for v3, sources in inflow.items():
            for v2, amount in sources.items():
                flows[(e, v2, v3)] = amount
    return flows


def _topological_order(e, seeds, by_stage, vnfs) -> List[str]:
    succ = defaultdict(set)
    reach, stack = set(seeds), list(seeds)
    while stack:
        v2 = stack.pop()
        for o, v3, _ in by_stage.get(v2, ()):
            if o == e or o in vnfs:
                succ[v2].add(v3)
                if v3 not in reach:
                    reach.add(v3)
                    stack.append(v3)
    indeg = {v: 0 for v in reach}
    for v2 in reach:
        for v3 in succ[v2]:
            indeg[v3] += 1
    rank = {v: n for n, v in enumerate(vnfs)}
    ready = sorted((v for v in reach if indeg[v] == 0), key=rank.get)
    order = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for w in sorted(succ[v], key=rank.get):
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
        ready.sort(key=rank.get)
    if len(order) != len(reach):
        stuck = sorted(v for v in reach if v not in order)
        raise CyclicLogicalGraph(f"chi graph of endpoint {e!r} has a cycle through {stuck}")
    return order


@dataclass(frozen=True)
class Commodity:
    """Traffic tracked as one unit in the flow model.

    Per-endpoint models have one commodity per endpoint. Aggregated models
    merge endpoints whose first-hop chi factors coincide; since VNF-to-VNF chi
    factors carry no endpoint index, the merged flows obey the same laws.
    """

    label: str
    members: Tuple[str, ...]
    flows: Mapping[Triple, float]  # (v, v) injected total, (v1, v2) inter-VNF
    first_hop_chi: Mapping[Triple, float]


def commodities(lg: LogicalGraph, aggregate: bool = False) -> List[Commodity]:
    derived = derive_logical_flows(lg)
    first_hop = defaultdict(dict)
    for (o, v2, v3), ratio in lg.chi.items():
        if o in lg.endpoints and ratio > 0:
            first_hop[o][(v2, v3)] = ratio

    groups: Dict[object, List[str]] = {}
    for e in lg.endpoints:
        if lg.total_injected(e) <= 0:
            continue
        key = tuple(sorted(first_hop[e].items())) if aggregate else e
        groups.setdefault(key, []).append(e)

    result = []
    for n, members in enumerate(groups.values()):
        flows: Dict[Triple, float] = defaultdict(float)
        for e in members:
            for v in lg.vnfs:
                rate = lg.injection(e, v)
                if rate > 0:
                    flows[(v, v)] += rate
        member_set = set(members)
        for (e, v1, v2), rate in derived.items():
            if e in member_set:
                flows[(v1, v2)] += rate
        label = members[0] if not aggregate else f"class{n}"
        result.append(Commodity(label, tuple(members), dict(flows), dict(first_hop[members[0]])))
    return result


# --------------------------------------------------------------------------
# energy


def energy_breakdown(sol: Solution, em: EnergyModel, pg: PhysicalGraph, lg: LogicalGraph) -> Dict[str, float]:
    """The five energy components in watts."""
    idle = sum(em.idle(c) * val for c, val in sol.y.items())
    overhead = sum(em.overhead(c, v) * val for (c, v), val in sol.delta.items())
    proc = sum(em.proc(c) * lg.cpu(v2) * val for (c, _, _, v2), val in sol.processed.items())
    sw = 0.0
    link = 0.0
    node_set = set(pg.nodes)
    for (i, j, _, _, _), val in sol.tau.items():
        link += em.link((i, j)) * val
        if i in node_set:
            sw += em.switch(i) * val
    return {"idle": idle, "overhead": overhead, "proc": proc, "sw": sw, "link": link}


def total_energy(sol: Solution, em: EnergyModel, pg: PhysicalGraph, lg: LogicalGraph) -> float:
    # fixed order keeps the float sum reproducible
    parts = energy_breakdown(sol, em, pg, lg)
    return parts["idle"] + parts["overhead"] + parts["proc"] + parts["sw"] + parts["link"]


def check_pair(lg: LogicalGraph, pg: PhysicalGraph) -> None:
    if set(lg.endpoints) != set(pg.endpoints):
        raise ModelError("logical and physical graphs disagree on the endpoint set")
    if set(lg.vnfs) & set(pg.nodes):
        raise ModelError("identifiers used both as VNF and node")


def iter_binary_keys(pg: PhysicalGraph, lg: LogicalGraph) -> Iterable[tuple]:
    for link in pg.links:
        yield ("x",) + link
    for c in pg.nodes:
        yield ("y", c)
    for c in pg.nodes:
        for v in lg.vnfs:
            yield ("delta", c, v)
