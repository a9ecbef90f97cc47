"""Command line entry point: ``optiloop {generate,solve,sweep,verify,export-lp}``."""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

from optiloop.errors import OptiLoopError, SchemaViolation
from optiloop.loop import choose_aggregate
from optiloop.metrics import (
    STRATEGIES,
    expand_strategies,
    run_experiment,
    run_strategy,
    solution_from_dict,
    solution_to_dict,
    to_csv,
    to_json,
)
from optiloop.milp import VariablePolicy, build, to_lp_format
from optiloop.scenario import (
    dumps_scenario,
    load_scenario,
    operator_scenario,
    random_tiny_scenario,
    scale_up_scenario,
)
from optiloop.validate import validate

EXIT_FAILED = 1  # verification found violations, or a run did not succeed
EXIT_ERROR = 2  # bad input or internal error


class CliError(Exception):
    def __init__(self, kind: str, message: str, **extra):
        super().__init__(message)
        self.kind, self.message, self.extra = kind, message, extra


def _emit(text: str, out: Optional[str]) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError("io", f"cannot read {path}: {exc.strerror}", path=path) from exc
    except json.JSONDecodeError as exc:
        raise CliError("json", f"{path}: {exc}", path=path) from exc


def _scenario(path: str):
    return load_scenario(_read_json(path))


def _multipliers(text: str) -> List[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated list of numbers: {text!r}")
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("multipliers must be positive")
    return vals


# --------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    if args.scenario:
        scn = _scenario(args.scenario)
    elif args.tiny:
        scn = random_tiny_scenario(args.seed)
    else:
        scn = operator_scenario(args.seed, n_endpoints=args.endpoints, n_nodes=args.nodes, mean_degree=args.degree)
    if args.scale_up:
        scn = scale_up_scenario(scn, args.seed, ring=args.ring, extra_endpoints=args.extra_endpoints)
    _emit(dumps_scenario(scn), args.out)
    return 0


def _result_text(results, fmt: str, timing: bool) -> str:
    return to_json(results, timing) if fmt == "json" else to_csv(results, timing)


def cmd_solve(args) -> int:
    scn = _scenario(args.scenario)
    (strategy,) = expand_strategies([args.strategy]) if args.strategy != "all" else (None,)
    if strategy is None:
        raise CliError("usage", "solve runs a single strategy; use sweep for several")
    lg = scn.demand(args.multiplier)
    res, _, sol = run_strategy(
        strategy, lg, scn.physical, scn.energy,
        scenario=scn.label, multiplier=args.multiplier, seed=args.seed, tolerance=args.tolerance,
    )
    if args.solution_out and sol is not None:
        _emit(json.dumps(solution_to_dict(sol), indent=1) + "\n", args.solution_out)
    _emit(_result_text([res], args.format, args.timing), args.out)
    return 0 if res.ok else EXIT_FAILED


def cmd_sweep(args) -> int:
    scn = _scenario(args.scenario)
    results = run_experiment(scn, args.strategy.split(","), args.multipliers, seed=args.seed, tolerance=args.tolerance)
    _emit(_result_text(results, args.format, args.timing), args.out)
    if args.csv:
        _emit(to_csv(results, args.timing), args.csv)
    if args.json:
        _emit(to_json(results, args.timing), args.json)
    return 0


def cmd_verify(args) -> int:
    scn = _scenario(args.scenario)
    try:
        sol = solution_from_dict(_read_json(args.solution))
    except AttributeError as exc:
        raise CliError("schema", f"{args.solution}: not a solution document") from exc
    lg = scn.demand(args.multiplier)
    report = validate(sol, lg, scn.physical, scn.energy, tol=args.tolerance)
    if report.ok:
        _emit("ok\n", args.out)
        return 0
    doc = {
        "error": "infeasible_solution",
        "tags": sorted(report.tags),
        "violations": [
            {"tag": v.tag, "index": [str(i) for i in v.index], "amount": v.amount} for v in report.violations[:50]
        ],
    }
    sys.stderr.write(json.dumps(doc, indent=1) + "\n")
    return EXIT_FAILED


def cmd_export_lp(args) -> int:
    scn = _scenario(args.scenario)
    lg = scn.demand(args.multiplier)
    policy = VariablePolicy.all_relaxed() if args.relaxed else VariablePolicy.all_binary()
    aggregate = choose_aggregate(lg, scn.physical) if args.aggregate is None else args.aggregate
    p = build(lg, scn.physical, scn.energy, policy, aggregate=aggregate)
    _emit(to_lp_format(p), args.out)
    return 0


# --------------------------------------------------------------------------
# parser


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--tolerance", type=float, default=1e-6, help="feasibility tolerance (default 1e-6)")
    common.add_argument("--strategy", default="optiloop", help=f"one of {', '.join(STRATEGIES)}, a comma-separated list (sweep), or all")
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    parser = argparse.ArgumentParser(prog="optiloop", description="Energy-aware VNF placement and routing.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", parents=[common], help="synthesise a scenario document")
    gen.add_argument("--tiny", action="store_true", help="small random instance instead of operator-like")
    gen.add_argument("--nodes", type=int, default=51)
    gen.add_argument("--endpoints", type=int, default=42)
    gen.add_argument("--degree", type=float, default=3.0, help="mean node degree of the core")
    gen.add_argument("--scale-up", action="store_true", help="apply the ring-of-five scale-up")
    gen.add_argument("--ring", type=int, default=5)
    gen.add_argument("--extra-endpoints", type=int, default=160)
    gen.add_argument("--scenario", help="scale up this scenario file instead of generating one")
    gen.set_defaults(func=cmd_generate)

    solve = sub.add_parser("solve", parents=[common], help="run one strategy on a scenario")
    solve.add_argument("scenario")
    solve.add_argument("--multiplier", type=float, default=1.0)
    solve.add_argument("--solution-out", help="also write the solution document here")
    solve.add_argument("--timing", action="store_true", help="include wall_time")
    solve.set_defaults(func=cmd_solve)

    sweep = sub.add_parser("sweep", parents=[common], help="strategies x traffic multipliers")
    sweep.add_argument("scenario")
    sweep.add_argument("--multipliers", type=_multipliers, default=[0.5, 1.0, 2.0, 3.0])
    sweep.add_argument("--csv", help="additionally write CSV here")
    sweep.add_argument("--json", help="additionally write JSON here")
    sweep.add_argument("--timing", action="store_true", help="include wall_time")
    sweep.set_defaults(func=cmd_sweep)

    ver = sub.add_parser("verify", parents=[common], help="re-check a stored solution")
    ver.add_argument("scenario")
    ver.add_argument("solution")
    ver.add_argument("--multiplier", type=float, default=1.0)
    ver.set_defaults(func=cmd_verify)

    lp = sub.add_parser("export-lp", parents=[common], help="dump the model in LP format")
    lp.add_argument("scenario")
    lp.add_argument("--multiplier", type=float, default=1.0)
    lp.add_argument("--relaxed", action="store_true", help="relax every binary")
    agg = lp.add_mutually_exclusive_group()
    agg.add_argument("--aggregate", dest="aggregate", action="store_true", default=None)
    agg.add_argument("--per-endpoint", dest="aggregate", action="store_false")
    lp.set_defaults(func=cmd_export_lp)
    return parser


def _fail(kind: str, message: str, **extra) -> int:
    doc = {"error": kind, "message": message}
    doc.update(extra)
    sys.stderr.write(json.dumps(doc) + "\n")
    return EXIT_ERROR


def main(argv: Optional[List[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        return _fail(exc.kind, exc.message, **exc.extra)
    except SchemaViolation as exc:
        return _fail("schema", exc.message, path=exc.path)
    except OptiLoopError as exc:
        return _fail(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
