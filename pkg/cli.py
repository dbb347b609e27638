#!/usr/bin/env python
"""
Command-Line Interface
solve, check, generate, oracle and stats on instance files
"""

import argparse
import logging
import math
import sys
from typing import List, Optional

from config import load_config
from decomposition import SolverInvariantError, decompose
from dual_bca import run
from exact_oracle import DEFAULT_BUDGET, brute_force_solve
from instance_io import (
    format_float,
    parse_solution,
    read_instance,
    write_convergence_csv,
    write_instance,
    write_solution,
)
from instance_model import check_feasible, energy, summarize
from synth_gen import generate

logger = logging.getLogger(__name__)

ENERGY_TOLERANCE = 1e-6


def _emit(key: str, value):
    if isinstance(value, float):
        value = format_float(value)
    print(f"{key} {value}")


def _write(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def cmd_solve(args) -> int:
    config = load_config(args.config)
    solver_config = config.solver_with(
        max_sweeps=args.max_sweeps,
        gap_tolerance=args.gap,
        directions=args.direction,
    )
    instance = read_instance(args.instance)
    result = run(decompose(instance), solver_config)

    if args.out:
        _write(args.out, write_solution(instance, result.assignment, result.energy, result.dual_bound))
    if args.csv:
        _write(args.csv, write_convergence_csv(result.records))

    _emit("ENERGY", result.energy)
    _emit("BOUND", result.dual_bound)
    _emit("GAP", result.gap)
    _emit("ABSGAP", result.absolute_gap)
    _emit("SWEEPS", result.sweeps)
    _emit("TERMINATION", result.termination)
    return 0


def cmd_check(args) -> int:
    instance = read_instance(args.instance)
    with open(args.solution, "r", encoding="utf-8") as f:
        solution = parse_solution(instance, f.read())

    report = check_feasible(instance, solution.assignment)
    for v in report.violations:
        print(f"violation: {v}", file=sys.stderr)
    value = energy(instance, solution.assignment)
    matches = abs(value - solution.energy) <= ENERGY_TOLERANCE
    if not matches:
        print(f"energy mismatch: file states {format_float(solution.energy)}, recomputed {format_float(value)}", file=sys.stderr)

    _emit("FEASIBLE", int(report.feasible))
    _emit("ENERGY", value)
    _emit("ENERGY_MATCH", int(matches))
    return 0 if report.feasible and matches else 1


def cmd_generate(args) -> int:
    config = load_config(args.config)
    params = config.gen
    if args.seed is not None:
        params = params.model_validate({**params.model_dump(), "seed": args.seed})
    instance, truth = generate(params, config.cost)
    text = write_instance(instance)
    if args.out:
        _write(args.out, text)
        _emit("DETECTIONS", len(instance.detections))
        _emit("TRANSITIONS", len(instance.transitions))
        _emit("CONFLICTS", len(instance.conflicts))
        _emit("TRUTH_ENERGY", energy(instance, truth))
    else:
        sys.stdout.write(text)
    return 0


def cmd_oracle(args) -> int:
    instance = read_instance(args.instance)
    result = brute_force_solve(instance, args.budget)
    _emit("OPTIMUM", result.optimum)
    _emit("EXPLORED", result.explored)
    return 0


def cmd_stats(args) -> int:
    stats = summarize(read_instance(args.instance))
    per_frame = stats.detections_per_frame
    conflicts = stats.conflicts_per_frame
    _emit("FRAMES", stats.frame_count)
    _emit("DETECTIONS", sum(per_frame))
    _emit("DETECTIONS_PER_FRAME", float(sum(per_frame) / len(per_frame)))
    _emit("MAX_DETECTIONS_PER_FRAME", max(per_frame))
    _emit("CONFLICTS", sum(conflicts))
    _emit("CONFLICTS_PER_FRAME", float(sum(conflicts) / len(conflicts)))
    _emit("MAX_CONFLICT_CLIQUE", stats.largest_conflict_clique)
    _emit("MOVES", stats.moves)
    _emit("DIVISIONS", stats.divisions)
    return 0


def _positive_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value) or value < 0:
        raise argparse.ArgumentTypeError(f"expected a finite value >= 0, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trackbca",
        description="Dual block-coordinate ascent for tracking-by-assignment",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging on standard error")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="Solve an instance")
    solve.add_argument("instance")
    solve.add_argument("--config", help="key = value configuration file")
    solve.add_argument("--out", help="Write the solution file here")
    solve.add_argument("--csv", help="Write the convergence log here")
    solve.add_argument("--direction", choices=["both", "forward", "backward"], help="Primal heuristic direction(s)")
    solve.add_argument("--max-sweeps", type=int, help="Override solver.max_sweeps")
    solve.add_argument("--gap", type=_positive_float, help="Override solver.gap_tolerance")
    solve.set_defaults(handler=cmd_solve)

    check = sub.add_parser("check", help="Verify a solution file against its instance")
    check.add_argument("instance")
    check.add_argument("solution")
    check.set_defaults(handler=cmd_check)

    gen = sub.add_parser("generate", help="Generate a synthetic instance")
    gen.add_argument("--config", help="key = value configuration file (gen.* and cost keys)")
    gen.add_argument("--out", help="Write the instance here instead of standard output")
    gen.add_argument("--seed", type=int, help="Override gen.seed")
    gen.set_defaults(handler=cmd_generate)

    oracle = sub.add_parser("oracle", help="Exact optimum of a tiny instance")
    oracle.add_argument("instance")
    oracle.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="Maximum number of binary variables")
    oracle.set_defaults(handler=cmd_oracle)

    stats = sub.add_parser("stats", help="Instance characteristics")
    stats.add_argument("instance")
    stats.set_defaults(handler=cmd_stats)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except SolverInvariantError as e:
        logger.debug("solver invariant violated", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
