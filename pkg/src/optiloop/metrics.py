"""Evaluation metrics, the strategy sweep, and result / solution files."""

from __future__ import annotations

import csv
import io
import json
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from optiloop.baselines import all_on, consolidation_solution, optimal
from optiloop.errors import BudgetExceeded, InfeasibleDemand, ModelError, NonConvergence, NumericalFailure
from optiloop.loop import NetworkConfig, Planner, run_optiloop
from optiloop.model import EnergyModel, LogicalGraph, PhysicalGraph, Solution, energy_breakdown
from optiloop.scenario import Scenario
from optiloop.solver import SolveStats
from optiloop.validate import validate

RESULT_VERSION = 1
SOLUTION_VERSION = 1

STRATEGIES = ("all_on", "consolidation", "optiloop", "optimal")
BREAKDOWN_KEYS = ("idle", "overhead", "proc", "sw", "link")

# version 1 column order; wall_time is appended only when timing is requested
CSV_COLUMNS = (
    "strategy",
    "scenario",
    "multiplier",
    "status",
    "energy_w",
    "idle_w",
    "overhead_w",
    "proc_w",
    "sw_w",
    "link_w",
    "savings",
    "spare_ccat",
    "mean_hops",
    "active_nodes",
    "active_links",
    "lp_solves",
    "vnf_instances",
    "per_node_traffic",
)

OK = "ok"


@dataclass
class RunResult:
    strategy: str
    scenario: str
    multiplier: float
    status: str = OK
    energy_total: Optional[float] = None
    breakdown: Dict[str, float] = field(default_factory=dict)
    savings: Optional[float] = None
    spare_ccat: Optional[float] = None
    mean_hops: Optional[float] = None
    active_nodes: Optional[int] = None
    active_links: Optional[int] = None
    vnf_instance_counts: Dict[str, int] = field(default_factory=dict)
    per_node_traffic: Dict[str, float] = field(default_factory=dict)
    lp_solve_count: int = 0
    wall_time: Optional[float] = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OK

    def sort_key(self):
        rank = STRATEGIES.index(self.strategy) if self.strategy in STRATEGIES else len(STRATEGIES)
        return (self.scenario, self.multiplier, rank, self.strategy)

    def to_dict(self, timing: bool = False) -> dict:
        out = {
            "strategy": self.strategy,
            "scenario": self.scenario,
            "multiplier": self.multiplier,
            "status": self.status,
            "energy_w": self.energy_total,
            "breakdown_w": {k: self.breakdown[k] for k in BREAKDOWN_KEYS if k in self.breakdown},
            "savings": self.savings,
            "spare_ccat": self.spare_ccat,
            "mean_hops": self.mean_hops,
            "active_nodes": self.active_nodes,
            "active_links": self.active_links,
            "lp_solves": self.lp_solve_count,
            "vnf_instances": dict(sorted(self.vnf_instance_counts.items())),
            "per_node_traffic": dict(sorted(self.per_node_traffic.items())),
        }
        if self.detail:
            out["detail"] = self.detail
        if timing:
            out["wall_time"] = self.wall_time
        return out


# --------------------------------------------------------------------------
# metrics


def node_usage(sol: Solution, lg: LogicalGraph, pg: PhysicalGraph) -> Dict[str, float]:
    """Capability used at each node: processing plus switching."""
    used: Dict[str, float] = defaultdict(float)
    for (c, _, _, v2), val in sol.processed.items():
        used[c] += lg.cpu(v2) * val
    for (i, _, _, _, _), val in sol.tau.items():
        if pg.is_node(i):
            used[i] += pg.rho(i) * val
    return dict(used)


def spare_ccat(cfg: NetworkConfig, sol: Solution, pg: PhysicalGraph, lg: LogicalGraph) -> float:
    """Unused computational capability summed over the active nodes."""
    used = node_usage(sol, lg, pg)
    return sum(max(0.0, pg.capacity(c) - used.get(c, 0.0)) for c in sorted(cfg.active_nodes))


def mean_hops(sol: Solution, lg: LogicalGraph, pg: PhysicalGraph) -> float:
    """Link traversals per injected traffic unit."""
    injected = sum(lg.total_injected(e) for e in lg.endpoints)
    if injected <= 0:
        return 0.0
    return sum(sol.tau.values()) / injected


def per_node_traffic(sol: Solution, pg: PhysicalGraph) -> Dict[str, float]:
    """Traffic sent out of each node, in bit/s."""
    out: Dict[str, float] = defaultdict(float)
    for (i, _, _, _, _), val in sol.tau.items():
        if pg.is_node(i):
            out[i] += val
    return {c: out[c] for c in sorted(out)}


def vnf_instance_counts(cfg: NetworkConfig) -> Dict[str, int]:
    return dict(sorted(Counter(v for _, v in cfg.placements).items()))


# --------------------------------------------------------------------------
# strategies

Outcome = Tuple[NetworkConfig, Solution, int]


def _run_all_on(lg, pg, em, seed) -> Outcome:
    stats = SolveStats()
    cfg, sol = all_on(lg, pg, em, rng_seed=seed, planner=Planner(lg, pg, em, stats=stats))
    return cfg, sol, stats.lp


def _run_consolidation(lg, pg, em, seed) -> Outcome:
    cfg, sol = consolidation_solution(lg, pg, em)
    return cfg, sol, 0


def _run_optiloop(lg, pg, em, seed) -> Outcome:
    res = run_optiloop(lg, pg, em, rng_seed=seed)
    return res.config, res.solution, res.lp_solves


def _run_optimal(lg, pg, em, seed) -> Outcome:
    stats = SolveStats()
    cfg, sol = optimal(lg, pg, em, stats=stats)
    return cfg, sol, stats.lp


RUNNERS: Dict[str, Callable[..., Outcome]] = {
    "all_on": _run_all_on,
    "consolidation": _run_consolidation,
    "optiloop": _run_optiloop,
    "optimal": _run_optimal,
}


def expand_strategies(names: Iterable[str]) -> List[str]:
    out: List[str] = []
    for name in names:
        picked = STRATEGIES if name == "all" else (name,)
        for s in picked:
            if s not in RUNNERS:
                raise ModelError(f"unknown strategy {s!r}; choose from {', '.join(STRATEGIES)} or all")
            if s not in out:
                out.append(s)
    return out


def run_strategy(
    strategy: str,
    lg: LogicalGraph,
    pg: PhysicalGraph,
    em: EnergyModel,
    *,
    scenario: str = "scenario",
    multiplier: float = 1.0,
    seed: int = 0,
    tolerance: float = 1e-6,
) -> Tuple[RunResult, Optional[NetworkConfig], Optional[Solution]]:
    """Execute one strategy and re-check its answer against the model.
    Failures land in ``status`` rather than propagating."""
    res = RunResult(strategy, scenario, float(multiplier))
    start = time.perf_counter()
    try:
        cfg, sol, lps = RUNNERS[strategy](lg, pg, em, seed)
    except InfeasibleDemand as exc:
        res.status, res.detail = "infeasible", str(exc)
        return res, None, None
    except NonConvergence as exc:
        res.status, res.detail = "nonconvergence", str(exc)
        return res, None, None
    except BudgetExceeded as exc:
        res.status, res.detail = "budget", str(exc)
        return res, None, None
    except ModelError as exc:
        res.status, res.detail = "skipped", str(exc)
        return res, None, None
    except NumericalFailure as exc:
        res.status, res.detail = "numerical", str(exc)
        return res, None, None
    finally:
        res.wall_time = time.perf_counter() - start

    res.lp_solve_count = lps
    check = validate(sol, lg, pg, em, cfg=cfg, tol=tolerance)
    if not check.ok:
        res.status, res.detail = "invalid", str(check)
    parts = energy_breakdown(sol, em, pg, lg)
    res.breakdown = {k: parts[k] for k in BREAKDOWN_KEYS}
    res.energy_total = sol.objective
    res.spare_ccat = spare_ccat(cfg, sol, pg, lg)
    res.mean_hops = mean_hops(sol, lg, pg)
    res.active_nodes = len(cfg.active_nodes)
    res.active_links = len(cfg.active_links)
    res.vnf_instance_counts = vnf_instance_counts(cfg)
    res.per_node_traffic = per_node_traffic(sol, pg)
    return res, cfg, sol


def run_experiment(
    scenario: Scenario,
    strategies: Sequence[str] = STRATEGIES,
    multipliers: Sequence[float] = (0.5, 1.0, 2.0, 3.0),
    seed: int = 0,
    tolerance: float = 1e-6,
) -> List[RunResult]:
    """Every (strategy, multiplier) cell on one scenario. Savings are taken
    against the all-on energy at the same multiplier, which is computed even
    when all_on itself is not among ``strategies``."""
    strategies = expand_strategies(strategies)
    results: List[RunResult] = []
    pg, em = scenario.physical, scenario.energy
    for m in sorted(float(m) for m in multipliers):
        lg = scenario.demand(m)
        cells = {s: run_strategy(s, lg, pg, em, scenario=scenario.label, multiplier=m, seed=seed, tolerance=tolerance)[0]
                 for s in strategies}
        base = cells.get("all_on")
        if base is None:
            base = run_strategy("all_on", lg, pg, em, scenario=scenario.label, multiplier=m, seed=seed, tolerance=tolerance)[0]
        for cell in cells.values():
            if cell.ok and base.ok and base.energy_total:
                cell.savings = 1.0 - cell.energy_total / base.energy_total
            results.append(cell)
    return sorted(results, key=RunResult.sort_key)


# --------------------------------------------------------------------------
# output


def _cell(val) -> str:
    if val is None:
        return ""
    if isinstance(val, float):
        return repr(val)
    if isinstance(val, dict):
        return json.dumps(val, sort_keys=True, separators=(",", ":"))
    return str(val)


def to_csv(results: Sequence[RunResult], timing: bool = False) -> str:
    columns = list(CSV_COLUMNS) + (["wall_time"] if timing else [])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in results:
        d = r.to_dict(timing)
        row = dict(d)
        for k in BREAKDOWN_KEYS:
            row[f"{k}_w"] = d["breakdown_w"].get(k)
        writer.writerow([_cell(row.get(col)) for col in columns])
    return buf.getvalue()


def to_json(results: Sequence[RunResult], timing: bool = False) -> str:
    doc = {"result_version": RESULT_VERSION, "results": [r.to_dict(timing) for r in results]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def parse_csv(text: str) -> List[dict]:
    """Read back rows written by :func:`to_csv`; numbers become floats."""
    rows = []
    for raw in csv.DictReader(io.StringIO(text)):
        row = {}
        for key, val in raw.items():
            if val == "":
                row[key] = None
            elif key in ("vnf_instances", "per_node_traffic"):
                row[key] = json.loads(val)
            elif key in ("strategy", "scenario", "status"):
                row[key] = val
            elif key in ("active_nodes", "active_links", "lp_solves"):
                row[key] = int(val)
            else:
                row[key] = float(val)
        rows.append(row)
    return rows


# --------------------------------------------------------------------------
# solution files


def solution_to_dict(sol: Solution) -> dict:
    return {
        "solution_version": SOLUTION_VERSION,
        "aggregate": sol.aggregate,
        "objective": sol.objective,
        "x": [[i, j, v] for (i, j), v in sorted(sol.x.items())],
        "y": [[c, v] for c, v in sorted(sol.y.items())],
        "delta": [[c, f, v] for (c, f), v in sorted(sol.delta.items())],
        "tau": [list(k) + [v] for k, v in sorted(sol.tau.items())],
        "transit": [list(k) + [v] for k, v in sorted(sol.transit.items())],
        "processed": [list(k) + [v] for k, v in sorted(sol.processed.items())],
        "handoff": [list(k) + [v] for k, v in sorted(sol.handoff.items())],
    }


def solution_from_dict(doc: dict) -> Solution:
    try:
        if doc.get("solution_version") != SOLUTION_VERSION:
            raise ModelError(f"unsupported solution_version {doc.get('solution_version')!r}")

        def table(name, width):
            out = {}
            for entry in doc.get(name, []):
                if len(entry) != width + 1:
                    raise ModelError(f"{name} entries need {width + 1} fields")
                key = tuple(entry[:width])
                out[key[0] if width == 1 else key] = float(entry[width])
            return out

        return Solution(
            x=table("x", 2),
            y=table("y", 1),
            delta=table("delta", 2),
            tau=table("tau", 5),
            transit=table("transit", 4),
            processed=table("processed", 4),
            handoff=table("handoff", 4),
            objective=float(doc.get("objective", 0.0)),
            aggregate=bool(doc.get("aggregate", False)),
        )
    except ModelError:
        raise
    except (TypeError, ValueError, AttributeError) as exc:
        raise ModelError(f"malformed solution document: {exc}") from exc
