"""Command-line entry points.

Exit codes: 0 success, 1 infeasible problem, 2 invalid input, 3 internal
failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import baselines, bnb, harness, mnl, oracle
from .model import (
    InfeasibleProblemError,
    load_instance,
    revenue,
    save_instance,
)

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_INVALID = 2
EXIT_INTERNAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logitprice",
        description="Constrained price optimization under logit-mixture demand")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a random instance")
    gen.add_argument("--m", type=int, required=True)
    gen.add_argument("--T", type=int, required=True)
    gen.add_argument("--mode", choices=harness.MODES, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)

    solve = sub.add_parser("solve", help="solve an instance file")
    solve.add_argument("--instance", required=True)
    solve.add_argument("--method", choices=harness.METHODS, required=True)
    solve.add_argument("--eps", type=float, default=0.01)
    solve.add_argument("--time-limit", type=float, default=120.0)
    solve.add_argument("--trace", default=None,
                       help="per-node CSV trace path (bnb only)")
    solve.add_argument("--out", default=None, help="write solution JSON here")

    orc = sub.add_parser("oracle", help="grid-search an instance file")
    orc.add_argument("--instance", required=True)
    orc.add_argument("--points", type=int, required=True,
                     help="grid points per dimension")

    sweep = sub.add_parser("sweep", help="run an experiment sweep")
    sweep.add_argument("--config", required=True, help="ExperimentConfig JSON")

    report = sub.add_parser("report", help="render tables and plots")
    report.add_argument("--records", required=True, help="records CSV path")
    report.add_argument("--out-dir", required=True)
    return parser


def _solution_doc(instance, prices, rev, gap, status, extra=None):
    doc = {
        "prices": [float(x) for x in prices],
        "revenue": rev,
        "gap": None if not math.isfinite(gap) else gap,
        "status": status,
    }
    if extra:
        doc.update(extra)
    return doc


def _cmd_gen(args) -> int:
    instance = harness.generate_instance(args.m, args.T, args.mode, args.seed)
    save_instance(instance, args.out)
    print(f"wrote instance m={args.m} T={args.T} mode={args.mode} -> {args.out}")
    return EXIT_OK


def _cmd_solve(args) -> int:
    instance = load_instance(args.instance)
    if args.method == "bnb":
        sol, stats = bnb.solve_bnb(instance, args.eps,
                                   time_limit=args.time_limit,
                                   trace_path=args.trace)
        doc = _solution_doc(instance, sol.prices, sol.revenue, sol.gap,
                            sol.status, {"nodes": stats.nodes_explored})
    else:
        prices, gap, nodes, status = harness.run_method(
            args.method, instance, args.eps, args.time_limit)
        doc = _solution_doc(instance, prices,
                            float(revenue(instance, prices)), gap, status,
                            {"nodes": nodes} if nodes is not None else None)
    print(json.dumps(doc, indent=2))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    instance = load_instance(args.instance)
    sol = oracle.grid_search(instance, args.points)
    print(json.dumps(_solution_doc(instance, sol.prices, sol.revenue, sol.gap,
                                   sol.status, sol.diagnostics), indent=2))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        config = harness.ExperimentConfig.from_json(fh.read())
    records = harness.run_sweep(config)
    print(f"wrote {len(records)} records to {config.out_dir}/records.csv")
    return EXIT_OK


def _cmd_report(args) -> int:
    records = harness.read_records_csv(args.records)
    paths = harness.emit_report(records, args.out_dir)
    for path in paths:
        print(path)
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "solve": _cmd_solve,
    "oracle": _cmd_oracle,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except InfeasibleProblemError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, KeyError, OSError, json.JSONDecodeError,
            oracle.NoFeasibleGridPointError, harness.GenerationError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
