"""OptiLoop: start from everything on, activate elements while the demand
cannot be served (fix_problems), deactivate elements the relaxation deems
least useful (save_energy), and repeat in a control loop.

Only LPs are ever solved: binaries are either fixed to the configuration or
relaxed to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from optiloop.errors import InfeasibleDemand, ModelError, NonConvergence
from optiloop.milp import CAPACITY_C, CAPACITY_L, ENABLE_CORE, ENABLE_LINK, HONOR_DELTA, ProblemInstance, build
from optiloop.model import EnergyModel, Link, LogicalGraph, PhysicalGraph, Solution
from optiloop.solver import FEAS_TOL, SolveReport, SolveStats, compute_iis, solve_lp
from optiloop.solver.backends import LPBackend

LINK_FAMILY = frozenset({CAPACITY_L, ENABLE_LINK})
COMPUTE_FAMILY = frozenset({CAPACITY_C, HONOR_DELTA, ENABLE_CORE})
AGGREGATE_ABOVE = 16
ZERO_TRAFFIC = 1e-9  # in model traffic units


@dataclass(frozen=True)
class NetworkConfig:
    active_links: FrozenSet[Link]
    active_nodes: FrozenSet[str]
    placements: FrozenSet[Tuple[str, str]]
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "active_links", frozenset(self.active_links))
        object.__setattr__(self, "active_nodes", frozenset(self.active_nodes))
        object.__setattr__(self, "placements", frozenset(self.placements))
        for c, v in self.placements:
            if c not in self.active_nodes:
                raise ModelError(f"placement ({c},{v}) on inactive node")

    def check(self, pg: PhysicalGraph) -> None:
        """Links whose ends are nodes need both ends active."""
        for i, j in self.active_links:
            for end in (i, j):
                if pg.is_node(end) and end not in self.active_nodes:
                    raise ModelError(f"link ({i},{j}) active but node {end!r} is off")

    @classmethod
    def all_on(cls, lg: LogicalGraph, pg: PhysicalGraph, rng_seed: int = 0) -> "NetworkConfig":
        return cls(
            frozenset(pg.links),
            frozenset(pg.nodes),
            frozenset((c, v) for c in pg.nodes for v in lg.vnfs),
            rng_seed,
        )

    @classmethod
    def from_solution(cls, sol: Solution, rng_seed: int = 0) -> "NetworkConfig":
        on = lambda table: frozenset(k for k, v in table.items() if v > 0.5)  # noqa: E731
        return cls(on(sol.x), on(sol.y), on(sol.delta), rng_seed)

    def with_link(self, link: Link, pg: PhysicalGraph) -> "NetworkConfig":
        ends = {end for end in link if pg.is_node(end)}
        return NetworkConfig(self.active_links | {link}, self.active_nodes | ends, self.placements, self.rng_seed)

    def with_placement(self, c: str, v: str) -> "NetworkConfig":
        return NetworkConfig(self.active_links, self.active_nodes | {c}, self.placements | {(c, v)}, self.rng_seed)

    def without_link(self, link: Link) -> "NetworkConfig":
        return NetworkConfig(self.active_links - {link}, self.active_nodes, self.placements, self.rng_seed)

    def without_placement(self, c: str, v: str) -> "NetworkConfig":
        return NetworkConfig(self.active_links, self.active_nodes, self.placements - {(c, v)}, self.rng_seed)

    def without_node(self, c: str) -> "NetworkConfig":
        return NetworkConfig(
            frozenset(link for link in self.active_links if c not in link),
            self.active_nodes - {c},
            frozenset(pl for pl in self.placements if pl[0] != c),
            self.rng_seed,
        )

    def size(self) -> int:
        return len(self.active_links) + len(self.active_nodes) + len(self.placements)


def choose_aggregate(lg: LogicalGraph, pg: PhysicalGraph) -> bool:
    """Aggregate endpoints when the model would otherwise be large and no
    per-endpoint delay limit needs them kept apart."""
    if pg.max_delay:
        return False
    return sum(1 for e in lg.endpoints if lg.total_injected(e) > 0) > AGGREGATE_ABOVE


class Planner:
    """Builds the model once and solves its fixed/relaxed variants."""

    def __init__(
        self,
        lg: LogicalGraph,
        pg: PhysicalGraph,
        em: EnergyModel,
        *,
        aggregate: Optional[bool] = None,
        local_handoff: bool = True,
        backend: Optional[LPBackend] = None,
        stats: Optional[SolveStats] = None,
    ):
        self.lg, self.pg, self.em = lg, pg, em
        self.aggregate = choose_aggregate(lg, pg) if aggregate is None else aggregate
        self.base: ProblemInstance = build(lg, pg, em, aggregate=self.aggregate, local_handoff=local_handoff)
        self.backend = backend
        self.stats = stats if stats is not None else SolveStats()
        col = self.base.column_index
        self.links: List[Link] = list(pg.links)
        self.link_cols = np.array([col[("x",) + link] for link in self.links], dtype=int)
        self.nodes: List[str] = list(pg.nodes)
        self.node_cols = np.array([col[("y", c)] for c in self.nodes], dtype=int)
        self.slots: List[Tuple[str, str]] = [(c, v) for c in pg.nodes for v in lg.vnfs]
        self.slot_cols = np.array([col[("delta", c, v)] for c, v in self.slots], dtype=int)
        self._groups()

    def _groups(self):
        on_link, at_slot, at_node = {}, {}, {}
        for n, column in enumerate(self.base.columns):
            kind = column.key[0]
            if kind == "tau":
                on_link.setdefault(column.key[1:3], []).append(n)
            elif kind in ("t", "p", "h"):
                c, v2 = column.key[1], column.key[4]
                at_node.setdefault(c, []).append(n)
                if kind == "p":
                    at_slot.setdefault((c, v2), []).append(n)
        as_array = lambda d: {k: np.array(v, dtype=int) for k, v in d.items()}  # noqa: E731
        self.tau_on_link = as_array(on_link)
        self.p_at_slot = as_array(at_slot)
        self.traffic_at_node = as_array(at_node)

    def switched_off(self, kind: str, element, cfg: NetworkConfig):
        """(binary columns turned off, traffic columns that must be zero)
        when ``element`` is deactivated in ``cfg``."""
        col = self.base.column_index
        empty = np.zeros(0, dtype=int)
        if kind == "link":
            return np.array([col[("x",) + element]]), self.tau_on_link.get(element, empty)
        if kind == "placement":
            return np.array([col[("delta",) + element]]), self.p_at_slot.get(element, empty)
        c = element
        links = [link for link in cfg.active_links if c in link]
        bins = [col[("y", c)]] + [col[("x",) + link] for link in links]
        bins += [col[("delta", c, v)] for (c2, v) in cfg.placements if c2 == c]
        traffic = [self.traffic_at_node.get(c, empty)]
        traffic += [self.tau_on_link.get(link, empty) for link in self.pg.in_links(c) + self.pg.out_links(c)]
        return np.array(bins, dtype=int), np.concatenate(traffic)

    def restrict(self, values: np.ndarray, instance: ProblemInstance, off, traffic) -> Optional[np.ndarray]:
        """``values`` with the switched-off columns zeroed, if the traffic
        there is already zero and the result satisfies ``instance``."""
        if len(traffic) and np.abs(values[traffic]).max() > ZERO_TRAFFIC:
            return None
        out = values.copy()
        out[off] = 0.0
        out[traffic] = 0.0
        if instance.max_violation(out) > FEAS_TOL:
            return None
        return out

    def _masks(self, cfg: NetworkConfig):
        return (
            np.array([link in cfg.active_links for link in self.links], dtype=bool),
            np.array([c in cfg.active_nodes for c in self.nodes], dtype=bool),
            np.array([slot in cfg.placements for slot in self.slots], dtype=bool),
        )

    def instance(self, cfg: NetworkConfig, relax_active: bool = False, relax_inactive: bool = False) -> ProblemInstance:
        """Binaries fixed to ``cfg``; active ones relaxed to [0, 1] if
        ``relax_active``, inactive ones if ``relax_inactive``."""
        lower = self.base.lower.copy()
        upper = self.base.upper.copy()
        for cols, mask in zip((self.link_cols, self.node_cols, self.slot_cols), self._masks(cfg)):
            on, off = cols[mask], cols[~mask]
            lower[on] = 0.0 if relax_active else 1.0
            upper[on] = 1.0
            lower[off] = 0.0
            upper[off] = 1.0 if relax_inactive else 0.0
        return self.base.with_bounds(lower, upper, np.zeros(self.base.n_cols, dtype=bool))

    def solve(self, cfg: NetworkConfig, **relax) -> SolveReport:
        return solve_lp(self.instance(cfg, **relax), backend=self.backend, stats=self.stats)

    def values(self, report: SolveReport):
        v = report.values
        return v[self.link_cols], v[self.node_cols], v[self.slot_cols]


def _planner(lg, pg, em, planner: Optional[Planner], **opts) -> Planner:
    return planner if planner is not None else Planner(lg, pg, em, **opts)


# --------------------------------------------------------------------------
# initial solution


def initial_solution(
    lg: LogicalGraph, pg: PhysicalGraph, em: EnergyModel, rng_seed: int = 0, planner: Optional[Planner] = None, **opts
) -> Tuple[NetworkConfig, Solution]:
    """Everything on, every VNF on every node. If even this is infeasible,
    no configuration is feasible (activating elements only adds room)."""
    pl = _planner(lg, pg, em, planner, **opts)
    cfg = NetworkConfig.all_on(lg, pg, rng_seed)
    rep = pl.solve(cfg)
    if not rep.optimal:
        raise InfeasibleDemand("demand cannot be served even with every element active")
    return cfg, rep.solution


# --------------------------------------------------------------------------
# fix_problems


@dataclass
class FixTrace:
    activations: List[tuple] = field(default_factory=list)  # ("link", link) or ("placement", (c, v))
    iis_tags: List[frozenset] = field(default_factory=list)
    lp_solves: int = 0
    iis_solves: int = 0
    report: Optional[SolveReport] = None  # fixed-binary LP of the returned config

    @property
    def solution(self) -> Optional[Solution]:
        return None if self.report is None else self.report.solution


def _pick(rng, weights: np.ndarray) -> int:
    w = np.clip(weights, 0.0, None)
    total = w.sum()
    if total <= 0:
        return int(rng.integers(len(w)))
    return int(rng.choice(len(w), p=w / total))


def fix_problems(
    cfg: NetworkConfig,
    lg: LogicalGraph,
    pg: PhysicalGraph,
    em: EnergyModel,
    *,
    planner: Optional[Planner] = None,
    trace: Optional[FixTrace] = None,
    **opts,
) -> NetworkConfig:
    """Activate one element at a time until the configuration can serve the
    demand. The infeasible subsystem of the fixed LP says whether links or
    compute are short; the relaxation of the inactive elements says which
    one to add, picked at random with probability equal to its relaxed value."""
    cfg.check(pg)
    pl = _planner(lg, pg, em, planner, **opts)
    trace = trace if trace is not None else FixTrace()
    start_lp, start_iis = pl.stats.lp, pl.stats.iis_lp
    rng = np.random.default_rng(cfg.rng_seed)
    limit = len(pg.links) + len(pg.nodes) * len(lg.vnfs)
    hosts = {c for c in pg.nodes if pg.capacity(c) > 0}

    try:
        while True:
            rep = pl.solve(cfg)
            if rep.optimal:
                trace.report = rep
                return cfg
            if len(trace.activations) >= limit:
                raise NonConvergence(f"still infeasible after {limit} activations")
            iis = compute_iis(pl.instance(cfg), backend=pl.backend, stats=pl.stats)
            trace.iis_tags.append(iis.tags)
            relaxed = pl.solve(cfg, relax_inactive=True)
            if not relaxed.optimal:
                raise InfeasibleDemand("demand exceeds what the whole network can serve")
            x_val, _, d_val = pl.values(relaxed)

            link_ids = [n for n, link in enumerate(pl.links) if link not in cfg.active_links]
            slot_ids = [
                n for n, slot in enumerate(pl.slots) if slot not in cfg.placements and slot[0] in hosts
            ]
            link_w = x_val[link_ids] if link_ids else np.zeros(0)
            slot_w = d_val[slot_ids] if slot_ids else np.zeros(0)

            wants_link = bool(iis.tags & LINK_FAMILY) and bool(link_ids)
            wants_slot = bool(iis.tags & COMPUTE_FAMILY) and bool(slot_ids)
            if not wants_link and not wants_slot:
                # IIS names neither family: follow the relaxation's mass
                wants_link = bool(link_ids) and link_w.sum() > 0
                wants_slot = not wants_link and bool(slot_ids) and slot_w.sum() > 0
                if not wants_link and not wants_slot:
                    wants_link = bool(link_ids)
                    wants_slot = not wants_link and bool(slot_ids)
            if wants_link:
                link = pl.links[link_ids[_pick(rng, link_w)]]
                cfg = cfg.with_link(link, pg)
                trace.activations.append(("link", link))
            elif wants_slot:
                c, v = pl.slots[slot_ids[_pick(rng, slot_w)]]
                cfg = cfg.with_placement(c, v)
                trace.activations.append(("placement", (c, v)))
            else:
                raise InfeasibleDemand("nothing left to activate")
    finally:
        trace.lp_solves += pl.stats.lp - start_lp
        trace.iis_solves += pl.stats.iis_lp - start_iis


# --------------------------------------------------------------------------
# save_energy


@dataclass
class SaveStep:
    kind: str  # "placement" | "link" | "node"
    element: tuple
    relaxed_value: float
    adopted: bool
    energy: Optional[float]
    trial_solved: bool = True  # False when the trial optimum was known without an LP


@dataclass
class SaveTrace:
    steps: List[SaveStep] = field(default_factory=list)
    lp_solves: int = 0
    rolled_back: bool = False
    solution: Optional[Solution] = None  # fixed-binary LP solution of the returned config

    @property
    def deactivations(self) -> int:
        return sum(1 for s in self.steps if s.adopted)


_PREFERENCE = {"placement": 0, "link": 1, "node": 2}


def _argmin(pl: Planner, cfg: NetworkConfig, values: np.ndarray):
    """Strict minimum of the relaxed values over active placements, links
    and nodes; ties go to the placement, then the link, then the node."""
    options = []
    for kind, elems, cols in (
        ("placement", pl.slots, pl.slot_cols),
        ("link", pl.links, pl.link_cols),
        ("node", pl.nodes, pl.node_cols),
    ):
        active = _active_set(cfg, kind)
        ids = [n for n, el in enumerate(elems) if el in active]
        if ids:
            vals = values[cols]
            n = min(ids, key=lambda k: (vals[k], k))
            options.append((float(vals[n]), _PREFERENCE[kind], kind, elems[n]))
    value, _, kind, element = min(options)
    return value, kind, element


def _deactivate(cfg: NetworkConfig, kind: str, element) -> NetworkConfig:
    if kind == "placement":
        return cfg.without_placement(*element)
    if kind == "link":
        return cfg.without_link(element)
    return cfg.without_node(element)


def save_energy(
    cfg: NetworkConfig,
    lg: LogicalGraph,
    pg: PhysicalGraph,
    em: EnergyModel,
    *,
    current: Optional[SolveReport] = None,
    planner: Optional[Planner] = None,
    trace: Optional[SaveTrace] = None,
    **opts,
) -> NetworkConfig:
    """Repeatedly switch off the active element with the smallest relaxed
    value (active binaries relaxed, inactive ones fixed at 0) while the
    fixed LP stays feasible.

    ``current`` is the fixed-binary LP report of ``cfg`` if the caller has
    it; otherwise one extra LP computes it. The returned configuration is the
    lowest-energy one met along the way, so energy never goes up.

    Two LPs are skipped when their optimum is already known: the trial LP
    when the element carries no traffic in the current optimum (that point
    stays optimal once the element's fixed charge is dropped), and the next
    relaxation when the element's relaxed value was zero (the previous
    relaxed optimum remains feasible, hence optimal, for the smaller set).
    """
    cfg.check(pg)
    pl = _planner(lg, pg, em, planner, **opts)
    trace = trace if trace is not None else SaveTrace()
    start_lp = pl.stats.lp
    try:
        if current is None:
            current = pl.solve(cfg)
            if not current.optimal:
                raise InfeasibleDemand("save_energy needs a feasible starting configuration")
        cur_vals, cur_obj = current.values, current.objective
        best_cfg, best_vals, best_obj = cfg, cur_vals, cur_obj
        last_adopted = cfg
        relaxed_vals = None
        while cfg.size() > 0:
            if relaxed_vals is None:
                relaxed = pl.solve(cfg, relax_active=True)
                if not relaxed.optimal:
                    break  # cannot happen for a feasible cfg; stop defensively
                relaxed_vals = relaxed.values
            value, kind, element = _argmin(pl, cfg, relaxed_vals)
            trial = _deactivate(cfg, kind, element)
            off, traffic = pl.switched_off(kind, element, cfg)

            trial_inst = pl.instance(trial)
            trial_vals = pl.restrict(cur_vals, trial_inst, off, traffic)
            solved = trial_vals is None
            if solved:
                rep = solve_lp(trial_inst, backend=pl.backend, stats=pl.stats)
                if not rep.optimal:
                    trace.steps.append(SaveStep(kind, _as_tuple(element), value, False, None))
                    break
                trial_vals, trial_obj = rep.values, rep.objective
            else:
                trial_obj = trial_inst.objective_value(trial_vals)
            trace.steps.append(SaveStep(kind, _as_tuple(element), value, True, trial_obj, solved))

            relaxed_vals = (
                pl.restrict(relaxed_vals, pl.instance(trial, relax_active=True), off, traffic)
                if value <= ZERO_TRAFFIC
                else None
            )
            cfg = last_adopted = trial
            cur_vals, cur_obj = trial_vals, trial_obj
            if trial_obj < best_obj - 1e-9 * max(1.0, abs(best_obj)):
                best_cfg, best_vals, best_obj = trial, trial_vals, trial_obj
        trace.rolled_back = best_cfg != last_adopted
        trace.solution = pl.base.decode(best_vals, best_obj)
        return best_cfg
    finally:
        trace.lp_solves += pl.stats.lp - start_lp


def _active_set(cfg: NetworkConfig, kind: str):
    if kind == "placement":
        return cfg.placements
    if kind == "link":
        return cfg.active_links
    return cfg.active_nodes


def _as_tuple(element) -> tuple:
    return element if isinstance(element, tuple) else (element,)


# --------------------------------------------------------------------------
# control loop


@dataclass
class RoundTrace:
    multiplier: float
    fix: FixTrace
    save: SaveTrace
    config: NetworkConfig


def control_loop(
    cfg: NetworkConfig,
    lg: LogicalGraph,
    pg: PhysicalGraph,
    em: EnergyModel,
    rounds: int,
    *,
    multipliers: Optional[Sequence[float]] = None,
    history: Optional[List[RoundTrace]] = None,
    **opts,
) -> NetworkConfig:
    """Each round: fix problems, then save energy, on the (possibly projected)
    demand of that round. ``multipliers[r]`` scales the demand of round r."""
    if multipliers is not None and len(multipliers) < rounds:
        raise ValueError("need one demand multiplier per round")
    planners = {}
    for r in range(rounds):
        m = 1.0 if multipliers is None else float(multipliers[r])
        if m not in planners:
            planners[m] = Planner(lg if m == 1.0 else lg.scaled(m), pg, em, **opts)
        pl = planners[m]
        fix, save = FixTrace(), SaveTrace()
        cfg = fix_problems(cfg, pl.lg, pg, em, planner=pl, trace=fix)
        cfg = save_energy(cfg, pl.lg, pg, em, current=fix.report, planner=pl, trace=save)
        if history is not None:
            history.append(RoundTrace(m, fix, save, cfg))
    return cfg


@dataclass
class OptiLoopResult:
    config: NetworkConfig
    solution: Solution
    fix: FixTrace
    save: SaveTrace
    lp_solves: int


def run_optiloop(
    lg: LogicalGraph, pg: PhysicalGraph, em: EnergyModel, rng_seed: int = 0, **opts
) -> OptiLoopResult:
    """One pass from scratch: all-on start, fix_problems (a no-op when the
    start is feasible), then save_energy."""
    pl = Planner(lg, pg, em, **opts)
    cfg, _ = initial_solution(lg, pg, em, rng_seed, planner=pl)
    fix, save = FixTrace(), SaveTrace()
    cfg = fix_problems(cfg, lg, pg, em, planner=pl, trace=fix)
    cfg = save_energy(cfg, lg, pg, em, current=fix.report, planner=pl, trace=save)
    return OptiLoopResult(cfg, save.solution, fix, save, pl.stats.lp)
