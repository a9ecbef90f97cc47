"""Scenarios: the vEPC service graph, operator-like topologies, traffic
sampling, the ring-of-five scale-up, small random instances, and JSON I/O."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from jsonschema import Draft202012Validator

from optiloop.errors import DisconnectedTopology, InfeasibleDemand, ModelError, SchemaViolation
from optiloop.model import EnergyModel, LinkSpec, LogicalGraph, PhysicalGraph

SCHEMA_VERSION = 1

# calibration, read off the testbed power measurements
NODE_IDLE_STEP_W = 35.0 - 21.0  # sleeping -> active switch
SERVER_IDLE_STEP_W = 120.0 - 80.0
SWITCH_J_PER_BIT = 0.5 / 8e9  # 0.5 W for 1 Gbyte/s
DEFAULT_PROC_J_PER_UNIT = 1e-9  # not published; a knob

ENDPOINT_LINK_BPS = 10e9
NODE_LINK_BPS = 100e9
NODE_CAPACITY = 100e9
TRAFFIC_RANGE_BPS = (74e6, 473e6)
DOWNLINK_SHARE = 0.82

ENB, PSGW, MME, HSS = "eNB", "P/S-GW", "MME", "HSS"
VEPC_VNFS = (ENB, PSGW, MME, HSS)
DIRECTIONS = ("dl", "ul")


@dataclass(frozen=True)
class Scenario:
    logical: LogicalGraph
    physical: PhysicalGraph
    energy: EnergyModel
    traffic_multiplier: float = 1.0
    label: str = "scenario"

    def __post_init__(self):
        if set(self.logical.endpoints) != set(self.physical.endpoints):
            raise ModelError("logical and physical graphs disagree on the endpoint set")
        if not (self.traffic_multiplier > 0 and math.isfinite(self.traffic_multiplier)):
            raise ModelError("traffic multiplier must be > 0")

    def demand(self, multiplier: float = 1.0) -> LogicalGraph:
        """Logical graph with injected flows scaled by the scenario multiplier
        times ``multiplier``."""
        factor = self.traffic_multiplier * multiplier
        return self.logical if factor == 1.0 else self.logical.scaled(factor)


# --------------------------------------------------------------------------
# vEPC service graph


def vepc_fixture(
    injected: Optional[Mapping[str, float]] = None,
    enb_to_mme: float = 0.3,
    psgw_to_mme: float = 0.32,
) -> LogicalGraph:
    """eNB -> P/S-GW -> MME -> HSS, with eNB also signalling the MME.

    ``injected`` maps endpoint -> rate entering the eNB; the default is a
    single endpoint "RRH" injecting 1 unit.
    """
    injected = {"RRH": 1.0} if injected is None else dict(injected)
    chi = {}
    for e in injected:
        chi[(e, ENB, PSGW)] = 1.0
        chi[(e, ENB, MME)] = enb_to_mme
    chi[(ENB, PSGW, MME)] = psgw_to_mme
    chi[(ENB, MME, HSS)] = 1.0
    chi[(PSGW, MME, HSS)] = 1.0
    return LogicalGraph(
        endpoints=tuple(injected),
        vnfs=VEPC_VNFS,
        injected_flows={(e, ENB): rate for e, rate in injected.items()},
        chi=chi,
        per_unit_cpu={v: 1.0 for v in VEPC_VNFS},
    )


# --------------------------------------------------------------------------
# topologies


def _connected(nodes: Sequence[str], edges: Iterable[Tuple[str, str]]) -> bool:
    adj: Dict[str, List[str]] = {c: [] for c in nodes}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    if not nodes:
        return True
    seen = {nodes[0]}
    queue = deque([nodes[0]])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == len(nodes)


def is_connected(pg: PhysicalGraph) -> bool:
    """Nodes form one component (ignoring direction) and every endpoint
    reaches some node."""
    node_edges = [(i, j) for (i, j) in pg.links if pg.is_node(i) and pg.is_node(j)]
    if not _connected(list(pg.nodes), node_edges):
        return False
    return all(pg.out_links(e) for e in pg.endpoints)


def operator_like_topology(
    seed: int,
    n_endpoints: int = 42,
    n_nodes: int = 51,
    mean_degree: float = 3.0,
    endpoint_bandwidth: float = ENDPOINT_LINK_BPS,
    node_bandwidth: float = NODE_LINK_BPS,
    capacity: float = NODE_CAPACITY,
    max_retries: int = 20,
) -> PhysicalGraph:
    """Random connected node mesh (spanning tree plus random chords up to
    ``mean_degree``), each endpoint attached to exactly two distinct nodes.
    Node-node links exist in both directions; endpoints only send."""
    if n_nodes < 2:
        raise ModelError("need at least two nodes")
    rng = np.random.default_rng(seed)
    nodes = [f"n{c:02d}" for c in range(n_nodes)]
    endpoints = [f"e{e:02d}" for e in range(n_endpoints)]
    for _ in range(max_retries):
        edges = set()
        order = list(rng.permutation(n_nodes))
        for pos in range(1, n_nodes):
            a = order[pos]
            b = order[int(rng.integers(pos))]
            edges.add((min(a, b), max(a, b)))
        target = max(len(edges), int(round(n_nodes * mean_degree / 2)))
        target = min(target, n_nodes * (n_nodes - 1) // 2)
        while len(edges) < target:
            a, b = (int(v) for v in rng.choice(n_nodes, size=2, replace=False))
            edges.add((min(a, b), max(a, b)))
        named = sorted((nodes[a], nodes[b]) for a, b in edges)
        if _connected(nodes, named):
            break
    else:
        raise DisconnectedTopology(f"no connected topology after {max_retries} attempts")

    links: Dict[Tuple[str, str], LinkSpec] = {}
    for a, b in named:
        links[(a, b)] = LinkSpec(node_bandwidth)
        links[(b, a)] = LinkSpec(node_bandwidth)
    for e in endpoints:
        for c in sorted(int(v) for v in rng.choice(n_nodes, size=2, replace=False)):
            links[(e, nodes[c])] = LinkSpec(endpoint_bandwidth)
    return PhysicalGraph(
        endpoints=tuple(endpoints),
        nodes=tuple(nodes),
        node_capacity={c: capacity for c in nodes},
        links=links,
    )


def split_endpoints(pg: PhysicalGraph, directions: Sequence[str] = DIRECTIONS) -> PhysicalGraph:
    """Replace each endpoint e by one copy per traffic direction, "e/dl" and
    "e/ul", attached exactly like e."""
    links = {}
    endpoints = []
    for e in pg.endpoints:
        for d in directions:
            endpoints.append(f"{e}/{d}")
    for (i, j), spec in pg.links.items():
        if i in pg.endpoints:
            for d in directions:
                links[(f"{i}/{d}", j)] = spec
        else:
            links[(i, j)] = spec
    max_delay = {f"{e}/{d}": v for e, v in pg.max_delay.items() for d in directions}
    return PhysicalGraph(tuple(endpoints), pg.nodes, dict(pg.node_capacity), links, dict(pg.switch_cpu_per_unit), max_delay)


def _base(e: str) -> str:
    return e.rsplit("/", 1)[0] if "/" in e else e


def sample_traffic(
    seed: int,
    endpoints: Sequence[str],
    low: float = TRAFFIC_RANGE_BPS[0],
    high: float = TRAFFIC_RANGE_BPS[1],
    downlink_share: float = DOWNLINK_SHARE,
    first_vnf: str = ENB,
) -> Dict[Tuple[str, str], float]:
    """Per physical endpoint, a total drawn uniformly in [low, high] bit/s,
    split into "e/dl" and "e/ul" flows into ``first_vnf``."""
    rng = np.random.default_rng(seed)
    flows = {}
    for e in endpoints:
        total = float(rng.uniform(low, high))
        flows[(f"{e}/dl", first_vnf)] = total * downlink_share
        flows[(f"{e}/ul", first_vnf)] = total * (1.0 - downlink_share)
    return flows


def default_energy(
    pg: PhysicalGraph,
    idle: float = NODE_IDLE_STEP_W,
    proc: float = DEFAULT_PROC_J_PER_UNIT,
    switch: float = SWITCH_J_PER_BIT,
    link: float = 0.0,
) -> EnergyModel:
    return EnergyModel(
        idle_power={c: idle for c in pg.nodes},
        proc_energy_per_cpu=proc,
        switch_energy_per_unit=switch,
        link_energy_per_unit=link,
    )


def operator_scenario(
    seed: int,
    n_endpoints: int = 42,
    n_nodes: int = 51,
    multiplier: float = 1.0,
    mean_degree: float = 3.0,
    psgw_to_mme: float = 0.32,
    enb_to_mme: float = 0.3,
    label: Optional[str] = None,
) -> Scenario:
    """vEPC demand over an operator-like topology, uplink and downlink as
    separate endpoint flows."""
    base = operator_like_topology(seed, n_endpoints, n_nodes, mean_degree)
    pg = split_endpoints(base)
    flows = sample_traffic(seed + 1, base.endpoints)
    lg = vepc_fixture({e: flows[(e, ENB)] for e in pg.endpoints}, enb_to_mme, psgw_to_mme)
    return Scenario(lg, pg, default_energy(pg), multiplier, label or f"operator-{n_endpoints}x{n_nodes}-s{seed}")


# --------------------------------------------------------------------------
# scale-up


def scale_up(pg: PhysicalGraph, seed: int, ring: int = 5, extra_endpoints: int = 160) -> PhysicalGraph:
    """Each node becomes a ring of ``ring`` nodes. Original node-node links
    and endpoint links attach to ring members round-robin. ``extra_endpoints``
    new physical endpoints are wired to two random nodes each.

    Endpoints sharing a base name ("e/dl", "e/ul") count as one physical
    endpoint and stay attached identically.
    """
    rng = np.random.default_rng(seed)
    members = {c: [f"{c}.{k}" for k in range(ring)] for c in pg.nodes}
    turn = {c: 0 for c in pg.nodes}

    def next_member(c):
        m = members[c][turn[c] % ring]
        turn[c] += 1
        return m

    node_bw = max((s.bandwidth for (i, j), s in pg.links.items() if pg.is_node(i) and pg.is_node(j)), default=NODE_LINK_BPS)
    links: Dict[Tuple[str, str], LinkSpec] = {}
    for c in pg.nodes:
        ms = members[c]
        for k in range(ring):
            a, b = ms[k], ms[(k + 1) % ring]
            if a != b:
                links[(a, b)] = LinkSpec(node_bw)
                links[(b, a)] = LinkSpec(node_bw)

    done = {}
    for (i, j), spec in pg.links.items():
        if pg.is_node(i) and pg.is_node(j):
            pair = (min(i, j), max(i, j))
            if pair not in done:
                done[pair] = {pair[0]: next_member(pair[0]), pair[1]: next_member(pair[1])}
            links[(done[pair][i], done[pair][j])] = spec

    groups: Dict[str, List[str]] = {}
    for e in pg.endpoints:
        groups.setdefault(_base(e), []).append(e)
    suffixes = sorted({e[len(b):] for b, es in groups.items() for e in es})
    attach: Dict[Tuple[str, str], str] = {}
    for (i, j), spec in pg.links.items():
        if i in pg.endpoints:
            key = (_base(i), j)
            if key not in attach:
                attach[key] = next_member(j)
            links[(i, attach[key])] = spec

    endpoints = list(pg.endpoints)
    all_nodes = [m for c in pg.nodes for m in members[c]]
    endpoint_bw = next((s.bandwidth for (i, _), s in pg.links.items() if i in pg.endpoints), ENDPOINT_LINK_BPS)
    width = len(str(extra_endpoints))
    for k in range(extra_endpoints):
        base = f"x{k:0{width}d}"
        picks = sorted(int(v) for v in rng.choice(len(all_nodes), size=2, replace=False))
        for suffix in suffixes:
            endpoints.append(base + suffix)
            for c in picks:
                links[(base + suffix, all_nodes[c])] = LinkSpec(endpoint_bw)

    capacity = {m: pg.capacity(c) for c in pg.nodes for m in members[c]}
    rho = {m: pg.rho(c) for c in pg.nodes for m in members[c] if pg.rho(c)}
    return PhysicalGraph(tuple(endpoints), tuple(all_nodes), capacity, links, rho, {})


def scale_up_traffic(lg: LogicalGraph, pg_up: PhysicalGraph, seed: int, factor: float = 5.0) -> LogicalGraph:
    """Demand for a scaled-up topology: new physical endpoints draw their
    totals from the original ones (bootstrap), then all flows are rescaled so
    the overall demand is exactly ``factor`` times the original."""
    rng = np.random.default_rng(seed)
    totals: Dict[str, Dict[str, float]] = {}
    for (e, v), rate in lg.injected_flows.items():
        totals.setdefault(_base(e), {})[e[len(_base(e)):] + "|" + v] = rate
    pool = [totals[b] for b in sorted(totals)]
    new_bases = sorted({_base(e) for e in pg_up.endpoints} - set(totals))
    flows = dict(lg.injected_flows)
    for b in new_bases:
        draw = pool[int(rng.integers(len(pool)))]
        for key, rate in draw.items():
            suffix, v = key.split("|", 1)
            flows[(b + suffix, v)] = rate
    original = sum(lg.injected_flows.values())
    now = sum(flows.values())
    scale = factor * original / now if now > 0 else 1.0
    flows = {k: r * scale for k, r in flows.items()}

    chi = {}
    endpoint_set = set(lg.endpoints)
    first_hop = {}
    for (o, v2, v3), ratio in lg.chi.items():
        if o in endpoint_set:
            first_hop.setdefault(o, {})[(v2, v3)] = ratio
        else:
            chi[(o, v2, v3)] = ratio
    template = first_hop[sorted(first_hop)[0]] if first_hop else {}
    for e in pg_up.endpoints:
        for (v2, v3), ratio in first_hop.get(e, template).items():
            chi[(e, v2, v3)] = ratio
    return LogicalGraph(
        endpoints=tuple(pg_up.endpoints),
        vnfs=lg.vnfs,
        injected_flows=flows,
        chi=chi,
        processing_delay=dict(lg.processing_delay),
        per_unit_cpu=dict(lg.per_unit_cpu),
    )


def scale_up_energy(em: EnergyModel, pg: PhysicalGraph, pg_up: PhysicalGraph) -> EnergyModel:
    """Ring members inherit the coefficients of the node they replace."""
    parent = {m: m.rsplit(".", 1)[0] for m in pg_up.nodes}

    def per_node(coef):
        if isinstance(coef, Mapping):
            return {m: coef.get(parent[m], 0.0) for m in pg_up.nodes}
        return coef

    link_coef = em.link_energy_per_unit
    if isinstance(link_coef, Mapping):
        link_coef = {link: (max(link_coef.values()) if link_coef else 0.0) for link in pg_up.links}
    return EnergyModel(
        idle_power={m: em.idle(parent[m]) for m in pg_up.nodes},
        proc_energy_per_cpu=per_node(em.proc_energy_per_cpu),
        switch_energy_per_unit=per_node(em.switch_energy_per_unit),
        link_energy_per_unit=link_coef,
        vnf_overhead_power={(m, v): w for (c, v), w in em.vnf_overhead_power.items() for m in pg_up.nodes if parent[m] == c},
    )


def scale_up_scenario(scn: Scenario, seed: int, ring: int = 5, extra_endpoints: int = 160, factor: float = 5.0) -> Scenario:
    pg_up = scale_up(scn.physical, seed, ring, extra_endpoints)
    lg_up = scale_up_traffic(scn.logical, pg_up, seed + 1, factor)
    em_up = scale_up_energy(scn.energy, scn.physical, pg_up)
    return Scenario(lg_up, pg_up, em_up, scn.traffic_multiplier, scn.label + "-scaled")


# --------------------------------------------------------------------------
# tiny random instances


def random_tiny_scenario(seed: int, max_tries: int = 50, require_feasible: bool = True) -> Scenario:
    """2-4 nodes, a 1-3 VNF chain, 1-2 endpoints and at most 8 directed
    links, so at most 24 binaries. Feasible with everything on unless
    ``require_feasible`` is False."""
    from optiloop.loop import initial_solution

    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        scn = _tiny_draw(rng, seed)
        if not require_feasible:
            return scn
        try:
            initial_solution(scn.logical, scn.physical, scn.energy)
        except InfeasibleDemand:
            continue
        return scn
    raise InfeasibleDemand(f"no feasible tiny scenario for seed {seed}")


def _tiny_draw(rng, seed) -> Scenario:
    n_nodes = int(rng.integers(2, 5))
    n_vnfs = int(rng.integers(1, 4))
    n_end = int(rng.integers(1, 3))
    nodes = [f"c{k}" for k in range(n_nodes)]
    vnfs = [f"v{k}" for k in range(n_vnfs)]
    ends = [f"e{k}" for k in range(n_end)]

    links: Dict[Tuple[str, str], LinkSpec] = {}
    order = [nodes[int(k)] for k in rng.permutation(n_nodes)]
    for pos in range(1, n_nodes):
        a, b = order[pos], order[int(rng.integers(pos))]
        links[(a, b)] = LinkSpec(float(rng.uniform(3, 15)))
        links[(b, a)] = LinkSpec(float(rng.uniform(3, 15)))
    for e in ends:
        links[(e, nodes[int(rng.integers(n_nodes))])] = LinkSpec(float(rng.uniform(5, 15)))
    spare = 8 - len(links)
    for _ in range(int(rng.integers(0, spare + 1))):
        i = ends[int(rng.integers(n_end))] if rng.random() < 0.3 else nodes[int(rng.integers(n_nodes))]
        j = nodes[int(rng.integers(n_nodes))]
        if i != j and (i, j) not in links:
            links[(i, j)] = LinkSpec(float(rng.uniform(3, 15)))

    capacity = {c: (0.0 if rng.random() < 0.15 else float(rng.uniform(3, 12))) for c in nodes}
    if all(k == 0 for k in capacity.values()):
        capacity[nodes[0]] = float(rng.uniform(3, 12))

    injected = {(e, vnfs[0]): float(rng.uniform(1, 5)) for e in ends}
    chi = {}
    for e in ends:
        if n_vnfs >= 2:
            chi[(e, vnfs[0], vnfs[1])] = float(rng.uniform(0.2, 1.5))
        if n_vnfs == 3 and rng.random() < 0.5:
            chi[(e, vnfs[0], vnfs[2])] = float(rng.uniform(0.1, 0.8))
    if n_vnfs == 3:
        chi[(vnfs[0], vnfs[1], vnfs[2])] = float(rng.uniform(0.2, 1.5))
    lg = LogicalGraph(
        tuple(ends),
        tuple(vnfs),
        injected,
        chi,
        per_unit_cpu={v: float(rng.choice([0.5, 1.0, 1.5])) for v in vnfs},
    )
    pg = PhysicalGraph(tuple(ends), tuple(nodes), capacity, links)
    em = EnergyModel(
        idle_power={c: float(rng.uniform(10, 40)) for c in nodes},
        proc_energy_per_cpu=float(rng.uniform(0.01, 0.2)),
        switch_energy_per_unit=float(rng.uniform(0.01, 0.2)),
        link_energy_per_unit=float(rng.uniform(0.01, 0.2)),
        vnf_overhead_power={(c, v): float(rng.uniform(0, 2)) for c in nodes for v in vnfs},
    )
    return Scenario(lg, pg, em, 1.0, f"tiny-s{seed}")


# --------------------------------------------------------------------------
# JSON documents

_NUM = {"type": "number", "minimum": 0}
_ID = {"type": "string", "minLength": 1}
_COEF = {"oneOf": [_NUM, {"type": "object", "additionalProperties": _NUM}]}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "logical", "physical", "energy"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "label": {"type": "string"},
        "traffic_multiplier": {"type": "number", "exclusiveMinimum": 0},
        "logical": {
            "type": "object",
            "required": ["endpoints", "vnfs", "injected_flows", "chi"],
            "properties": {
                "endpoints": {"type": "array", "items": _ID, "uniqueItems": True},
                "vnfs": {"type": "array", "items": _ID, "uniqueItems": True},
                "injected_flows": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["endpoint", "vnf", "rate_bps"],
                        "properties": {"endpoint": _ID, "vnf": _ID, "rate_bps": _NUM},
                        "additionalProperties": False,
                    },
                },
                "chi": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["origin", "vnf", "next", "ratio"],
                        "properties": {"origin": _ID, "vnf": _ID, "next": _ID, "ratio": _NUM},
                        "additionalProperties": False,
                    },
                },
                "processing_delay_s": {"type": "object", "additionalProperties": _NUM},
                "cpu_per_unit": {"type": "object", "additionalProperties": _NUM},
            },
            "additionalProperties": False,
        },
        "physical": {
            "type": "object",
            "required": ["endpoints", "nodes", "links"],
            "properties": {
                "endpoints": {"type": "array", "items": _ID, "uniqueItems": True},
                "nodes": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["id", "capacity"],
                        "properties": {"id": _ID, "capacity": _NUM, "switch_cpu_per_unit": _NUM},
                        "additionalProperties": False,
                    },
                },
                "links": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["from", "to", "bandwidth_bps"],
                        "properties": {
                            "from": _ID,
                            "to": _ID,
                            "bandwidth_bps": {"type": "number", "exclusiveMinimum": 0},
                            "delay_s": _NUM,
                        },
                        "additionalProperties": False,
                    },
                },
                "max_delay_s": {"type": "object", "additionalProperties": _NUM},
            },
            "additionalProperties": False,
        },
        "energy": {
            "type": "object",
            "required": ["idle_power_w", "proc_energy_j_per_unit"],
            "properties": {
                "idle_power_w": {"type": "object", "additionalProperties": _NUM},
                "proc_energy_j_per_unit": _COEF,
                "switch_energy_j_per_bit": _COEF,
                "link_energy_j_per_bit": {
                    "oneOf": [
                        _NUM,
                        {
                            "type": "array",
                            "items": {
                                "type": "object",
                                "required": ["from", "to", "joules_per_bit"],
                                "properties": {"from": _ID, "to": _ID, "joules_per_bit": _NUM},
                                "additionalProperties": False,
                            },
                        },
                    ]
                },
                "vnf_overhead_power_w": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["node", "vnf", "watts"],
                        "properties": {"node": _ID, "vnf": _ID, "watts": _NUM},
                        "additionalProperties": False,
                    },
                },
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

_validator = Draft202012Validator(SCENARIO_SCHEMA)


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def validate_document(doc) -> None:
    errors = sorted(_validator.iter_errors(doc), key=lambda err: (len(err.absolute_path), list(map(str, err.absolute_path))))
    if not errors:
        return
    err = errors[0]
    path = list(err.absolute_path)
    if err.validator == "required":
        missing = [p for p in err.validator_value if isinstance(err.instance, dict) and p not in err.instance]
        if missing:
            path.append(missing[0])
    raise SchemaViolation(_pointer(path), err.message)


def _coef_out(coef):
    return dict(coef) if isinstance(coef, Mapping) else float(coef)


def save_scenario(scn: Scenario) -> dict:
    lg, pg, em = scn.logical, scn.physical, scn.energy
    link_coef = em.link_energy_per_unit
    if isinstance(link_coef, Mapping):
        link_doc = [{"from": i, "to": j, "joules_per_bit": float(v)} for (i, j), v in link_coef.items()]
    else:
        link_doc = float(link_coef)
    nodes = []
    for c in pg.nodes:
        item = {"id": c, "capacity": float(pg.capacity(c))}
        if c in pg.switch_cpu_per_unit:
            item["switch_cpu_per_unit"] = float(pg.switch_cpu_per_unit[c])
        nodes.append(item)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "label": scn.label,
        "traffic_multiplier": float(scn.traffic_multiplier),
        "logical": {
            "endpoints": list(lg.endpoints),
            "vnfs": list(lg.vnfs),
            "injected_flows": [{"endpoint": e, "vnf": v, "rate_bps": float(r)} for (e, v), r in lg.injected_flows.items()],
            "chi": [{"origin": o, "vnf": v2, "next": v3, "ratio": float(r)} for (o, v2, v3), r in lg.chi.items()],
            "processing_delay_s": {v: float(d) for v, d in lg.processing_delay.items()},
            "cpu_per_unit": {v: float(r) for v, r in lg.per_unit_cpu.items()},
        },
        "physical": {
            "endpoints": list(pg.endpoints),
            "nodes": nodes,
            "links": [
                {"from": i, "to": j, "bandwidth_bps": float(s.bandwidth), "delay_s": float(s.delay)}
                for (i, j), s in pg.links.items()
            ],
            "max_delay_s": {e: float(d) for e, d in pg.max_delay.items()},
        },
        "energy": {
            "idle_power_w": {c: float(w) for c, w in em.idle_power.items()},
            "proc_energy_j_per_unit": _coef_out(em.proc_energy_per_cpu),
            "switch_energy_j_per_bit": _coef_out(em.switch_energy_per_unit),
            "link_energy_j_per_bit": link_doc,
            "vnf_overhead_power_w": [
                {"node": c, "vnf": v, "watts": float(w)} for (c, v), w in em.vnf_overhead_power.items()
            ],
        },
    }
    return doc


def load_scenario(doc) -> Scenario:
    validate_document(doc)
    lg_doc, pg_doc, em_doc = doc["logical"], doc["physical"], doc["energy"]
    try:
        lg = LogicalGraph(
            endpoints=tuple(lg_doc["endpoints"]),
            vnfs=tuple(lg_doc["vnfs"]),
            injected_flows={(f["endpoint"], f["vnf"]): float(f["rate_bps"]) for f in lg_doc["injected_flows"]},
            chi={(c["origin"], c["vnf"], c["next"]): float(c["ratio"]) for c in lg_doc["chi"]},
            processing_delay={v: float(d) for v, d in lg_doc.get("processing_delay_s", {}).items()},
            per_unit_cpu={v: float(r) for v, r in lg_doc.get("cpu_per_unit", {}).items()},
        )
    except ModelError as exc:
        raise SchemaViolation("/logical", str(exc)) from exc
    try:
        pg = PhysicalGraph(
            endpoints=tuple(pg_doc["endpoints"]),
            nodes=tuple(n["id"] for n in pg_doc["nodes"]),
            node_capacity={n["id"]: float(n["capacity"]) for n in pg_doc["nodes"]},
            links={
                (l["from"], l["to"]): LinkSpec(float(l["bandwidth_bps"]), float(l.get("delay_s", 0.0)))
                for l in pg_doc["links"]
            },
            switch_cpu_per_unit={
                n["id"]: float(n["switch_cpu_per_unit"]) for n in pg_doc["nodes"] if "switch_cpu_per_unit" in n
            },
            max_delay={e: float(d) for e, d in pg_doc.get("max_delay_s", {}).items()},
        )
    except ModelError as exc:
        raise SchemaViolation("/physical", str(exc)) from exc
    link_doc = em_doc.get("link_energy_j_per_bit", 0.0)
    if isinstance(link_doc, list):
        link_coef = {(l["from"], l["to"]): float(l["joules_per_bit"]) for l in link_doc}
    else:
        link_coef = float(link_doc)

    def coef_in(val):
        return {k: float(v) for k, v in val.items()} if isinstance(val, dict) else float(val)

    try:
        em = EnergyModel(
            idle_power={c: float(w) for c, w in em_doc["idle_power_w"].items()},
            proc_energy_per_cpu=coef_in(em_doc["proc_energy_j_per_unit"]),
            switch_energy_per_unit=coef_in(em_doc.get("switch_energy_j_per_bit", 0.0)),
            link_energy_per_unit=link_coef,
            vnf_overhead_power={(o["node"], o["vnf"]): float(o["watts"]) for o in em_doc.get("vnf_overhead_power_w", [])},
        )
        return Scenario(lg, pg, em, float(doc.get("traffic_multiplier", 1.0)), doc.get("label", "scenario"))
    except ModelError as exc:
        raise SchemaViolation("/", str(exc)) from exc


def dumps_scenario(scn: Scenario) -> str:
    return json.dumps(save_scenario(scn), indent=1, ensure_ascii=False) + "\n"


def loads_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation("/", f"not valid JSON: {exc}") from exc
    return load_scenario(doc)
