"""Comparison strategies: everything on, greedy consolidation, and the
brute-force optimum."""

from __future__ import annotations

import heapq
from collections import defaultdict, deque
from typing import Dict, List, Optional, Tuple

from optiloop.errors import InfeasibleDemand
from optiloop.loop import NetworkConfig, Planner, initial_solution
from optiloop.milp import VariablePolicy, build
from optiloop.model import EnergyModel, LogicalGraph, PhysicalGraph, Solution, derive_logical_flows, total_energy
from optiloop.solver import SolveStats, solve_exact

EPS = 1e-9


def all_on(lg: LogicalGraph, pg: PhysicalGraph, em: EnergyModel, **opts) -> Tuple[NetworkConfig, Solution]:
    """Every node, link and VNF instance stays active; routing is optimal
    for that configuration."""
    return initial_solution(lg, pg, em, **opts)


# --------------------------------------------------------------------------
# consolidation


class _State:
    def __init__(self, lg: LogicalGraph, pg: PhysicalGraph):
        self.lg, self.pg = lg, pg
        self.bw = {link: spec.bandwidth for link, spec in pg.links.items()}
        self.cap = {c: pg.capacity(c) for c in pg.nodes}
        self.links = set()
        self.nodes = set()
        self.placements = set()
        self.sol = Solution()

    def fork(self) -> "_State":
        other = _State.__new__(_State)
        other.lg, other.pg = self.lg, self.pg
        other.bw, other.cap = dict(self.bw), dict(self.cap)
        other.links, other.nodes, other.placements = set(self.links), set(self.nodes), set(self.placements)
        other.sol = Solution(
            tau=dict(self.sol.tau),
            transit=dict(self.sol.transit),
            processed=dict(self.sol.processed),
            handoff=dict(self.sol.handoff),
        )
        return other

    def usable(self, link, amount, origin, active_only) -> bool:
        i, j = link
        if self.bw[link] < amount - EPS:
            return False
        if self.pg.is_node(i) and self.cap[i] < self.pg.rho(i) * amount - EPS:
            return False
        if not active_only or link in self.links:
            return True
        # an endpoint may always start using its own access link to an active node
        return i == origin and j in self.nodes

    def route(self, src, dst, amount, active_only) -> Optional[List[tuple]]:
        """Fewest newly activated links first, then fewest hops."""
        if src == dst:
            return []
        best = {src: (0, 0)}
        heap = [(0, 0, src, None)]
        parent = {}
        while heap:
            new, hops, u, via = heapq.heappop(heap)
            if best.get(u, (new, hops)) < (new, hops):
                continue
            if via is not None:
                parent[u] = via
            if u == dst:
                break
            for link in sorted(self.pg.out_links(u)):
                if not self.usable(link, amount, src, active_only):
                    continue
                v = link[1]
                score = (new + (link not in self.links), hops + 1)
                if score < best.get(v, (float("inf"), 0)):
                    best[v] = score
                    heapq.heappush(heap, score + (v, link))
        if dst not in parent:
            return None
        path, u = [], dst
        while u != src:
            link = parent[u]
            path.append(link)
            u = link[0]
        return path[::-1]

    def send(self, path, amount, label, v1, v2):
        for n, link in enumerate(path):
            i, j = link
            self.bw[link] -= amount
            self.links.add(link)
            key = (i, j, label, v1, v2)
            self.sol.tau[key] = self.sol.tau.get(key, 0.0) + amount
            if self.pg.is_node(i):
                self.cap[i] -= self.pg.rho(i) * amount
                self.nodes.add(i)
            if self.pg.is_node(j):
                self.nodes.add(j)
                if n < len(path) - 1:
                    tkey = (j, label, v1, v2)
                    self.sol.transit[tkey] = self.sol.transit.get(tkey, 0.0) + amount

    def host(self, c, v, label, inflows, sources, active_only) -> bool:
        """Serve all of ``inflows`` {(v1, v): amount} for VNF v at node c.
        ``sources`` maps v1 to the vertex where that traffic currently sits."""
        need = sum(inflows.values()) * self.lg.cpu(v)
        if self.cap[c] < need - EPS:
            return False
        k = self.pg.capacity(c)
        for (v1, _), amount in inflows.items():
            # one instance takes at most k(c) of each incoming logical flow
            if self.sol.processed.get((c, label, v1, v), 0.0) + amount > k + EPS:
                return False
        for (v1, _), amount in sorted(inflows.items(), key=lambda kv: (-kv[1], kv[0])):
            src = sources[v1]
            path = self.route(src, c, amount, active_only)
            if path is None:
                return False
            self.send(path, amount, label, v1, v)
            pkey = (c, label, v1, v)
            self.sol.processed[pkey] = self.sol.processed.get(pkey, 0.0) + amount
            if not path and v1 != v:
                self.sol.handoff[pkey] = self.sol.handoff.get(pkey, 0.0) + amount
        if self.cap[c] < need - EPS:
            return False  # switching on the way in used up the room
        self.cap[c] -= need
        self.nodes.add(c)
        self.placements.add((c, v))
        return True


def _hops_from(pg: PhysicalGraph, src: str) -> Dict[str, int]:
    dist = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for _, w in sorted(pg.out_links(u)):
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def _chain(lg: LogicalGraph, e: str, derived) -> List[Tuple[str, Dict[tuple, float]]]:
    """VNFs the endpoint's traffic visits, in processing order, with their
    inflows {(v1, v): amount}; (v, v) is traffic injected at v."""
    inflow: Dict[str, Dict[tuple, float]] = defaultdict(dict)
    for v in lg.vnfs:
        if lg.injection(e, v) > 0:
            inflow[v][(v, v)] = lg.injection(e, v)
    succ = defaultdict(set)
    for (e2, v1, v2), rate in derived.items():
        if e2 == e and rate > 0:
            inflow[v2][(v1, v2)] = rate
            succ[v1].add(v2)
    indeg = {v: 0 for v in inflow}
    for v1 in list(succ):
        for v2 in succ[v1]:
            indeg[v2] += 1
    rank = {v: n for n, v in enumerate(lg.vnfs)}
    ready = sorted((v for v in inflow if indeg[v] == 0), key=rank.get)
    order = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for w in sorted(succ[v], key=rank.get):
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
        ready.sort(key=rank.get)
    return [(v, inflow[v]) for v in order]


def consolidation_solution(lg: LogicalGraph, pg: PhysicalGraph, em: EnergyModel) -> Tuple[NetworkConfig, Solution]:
    """Greedy three-stage placement, one endpoint flow at a time, heaviest
    first. For each VNF of the flow: reuse a deployed instance reachable over
    active links, else deploy on an active node, else wake the nearest
    sleeping node. Decisions are never revisited."""
    derived = derive_logical_flows(lg)
    order = sorted((e for e in lg.endpoints if lg.total_injected(e) > 0), key=lambda e: (-lg.total_injected(e), e))
    hosts = [c for c in pg.nodes if pg.capacity(c) > 0]
    st = _State(lg, pg)

    for e in order:
        location: Dict[str, str] = {}
        for v, inflows in _chain(lg, e, derived):
            sources = {v1: (e if v1 == v else location[v1]) for (v1, _) in inflows}
            main = sources[max(inflows, key=lambda k: (inflows[k], k))[0]]
            dist = _hops_from(pg, main)
            by_distance = lambda cs: sorted(cs, key=lambda c: (dist.get(c, float("inf")), c))  # noqa: E731

            stages = [
                ([c for c in by_distance(hosts) if (c, v) in st.placements], True),
                ([c for c in by_distance(hosts) if c in st.nodes and (c, v) not in st.placements], False),
                ([c for c in by_distance(hosts) if c not in st.nodes and c in dist], False),
            ]
            placed = None
            for candidates, active_only in stages:
                for c in candidates:
                    trial = st.fork()
                    if trial.host(c, v, e, inflows, sources, active_only):
                        st, placed = trial, c
                        break
                if placed is not None:
                    break
            if placed is None:
                raise InfeasibleDemand(f"consolidation cannot place {v} for endpoint {e}")
            location[v] = placed

    sol = st.sol
    sol.x = {link: 1.0 for link in st.links}
    sol.y = {c: 1.0 for c in st.nodes}
    sol.delta = {pl: 1.0 for pl in st.placements}
    sol.objective = total_energy(sol, em, pg, lg)
    cfg = NetworkConfig(frozenset(st.links), frozenset(st.nodes), frozenset(st.placements))
    return cfg, sol


def consolidation(lg: LogicalGraph, pg: PhysicalGraph, em: EnergyModel) -> NetworkConfig:
    return consolidation_solution(lg, pg, em)[0]


# --------------------------------------------------------------------------
# brute-force optimum


def optimal(
    lg: LogicalGraph,
    pg: PhysicalGraph,
    em: EnergyModel,
    node_limit: int = 100_000,
    binary_cap: int = 24,
    stats: Optional[SolveStats] = None,
    **build_opts,
) -> Tuple[NetworkConfig, Solution]:
    """Exact optimum by branch and bound over every binary."""
    p = build(lg, pg, em, VariablePolicy.all_binary(), **build_opts)
    rep = solve_exact(p, node_limit=node_limit, binary_cap=binary_cap, stats=stats)
    if not rep.optimal:
        raise InfeasibleDemand("no configuration serves the demand")
    return NetworkConfig.from_solution(rep.solution), rep.solution


def fixed_energy(cfg: NetworkConfig, lg: LogicalGraph, pg: PhysicalGraph, em: EnergyModel, **opts) -> Optional[float]:
    """Optimal energy of ``cfg`` with routing re-optimised, or None if the
    configuration cannot carry the demand."""
    rep = Planner(lg, pg, em, **opts).solve(cfg)
    return rep.objective if rep.optimal else None
