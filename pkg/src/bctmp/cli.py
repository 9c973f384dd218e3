"""Command line: ``bctmp preprocess | query | bench | verify``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import library as libio
from .behaviors import BehaviorSpec, make_behavior
from .bench import BenchConfig, run_benchmark
from .geometry import Pose2
from .planner import PlannerBudget
from .preprocess import preprocess, verify_library
from .query import FullPlan, execute_plan, query
from .scenario import load_scenario

log = logging.getLogger("bctmp")


def _goal(text: str) -> Pose2:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("goal must be x,y,theta")
    return Pose2(*parts)


def _behavior_override(scenario, path):
    if path is None:
        return scenario.behavior
    return make_behavior(BehaviorSpec.from_dict(json.loads(Path(path).read_text())))


def cmd_preprocess(args) -> int:
    sc = load_scenario(args.world)
    behavior = _behavior_override(sc, args.behavior)
    t0 = time.perf_counter()
    lib = preprocess(sc.world, sc.roi, behavior, PlannerBudget(args.timeout), seed=args.seed,
                     angle_weight=sc.angle_weight, jobs=args.jobs)
    elapsed = time.perf_counter() - t0
    size = libio.save(lib, args.out)
    report = libio.memory_report(lib)
    print(f"{len(lib)} tuples, {report['covered_cells']} covered cells, {len(lib.infeasible)} infeasible, "
          f"{size} bytes, {elapsed:.1f} s -> {args.out}")
    return 0


def _plan_doc(plan, report) -> dict:
    if isinstance(plan, FullPlan):
        return {
            "status": "ok" if plan.success else "rollout_failed",
            "tuple_index": plan.tuple_index,
            "path": plan.tau.waypoints.tolist(),
            "behavior_trajectory": plan.trajectory.tolist(),
            "rollout": plan.rollout.reason.value,
            "lookup_time_s": plan.lookup_time,
            "total_time_s": plan.total_time,
            "execution": None if report is None else {
                "success": report.success,
                "violations": [list(v) for v in report.violations],
                "position_error": report.position_error,
                "angle_error": report.angle_error,
                "steps": report.steps,
            },
        }
    return {
        "status": plan.kind,
        "infeasibility": plan.infeasibility.label if plan.infeasibility is not None else None,
        "lookup_time_s": plan.lookup_time,
    }


def cmd_query(args) -> int:
    sc = load_scenario(args.world)
    behavior = _behavior_override(sc, args.behavior)
    lib = libio.load(args.lib, sc.world, behavior)
    if args.verify:
        rep = verify_library(sc.world, lib, behavior)
        if not rep.ok:
            for p in rep.problems:
                print(p, file=sys.stderr)
            print("error: library failed re-verification", file=sys.stderr)
            return 2
    plan = query(sc.world, lib, args.goal, behavior, seed=args.seed)
    report = execute_plan(sc.world, plan, behavior) if isinstance(plan, FullPlan) else None
    doc = _plan_doc(plan, report)
    if args.json:
        print(json.dumps(doc, indent=1))
    elif isinstance(plan, FullPlan):
        print(f"tuple {plan.tuple_index}: {len(plan.tau)} waypoints, rollout {plan.rollout.reason.value}, "
              f"lookup {plan.lookup_time * 1e6:.1f} us, execution {'ok' if report.success else report.violations}")
    else:
        print(str(plan))
    return 0 if isinstance(plan, FullPlan) and report.success else 1


def cmd_bench(args) -> int:
    cfg = BenchConfig.load(args.config)
    res = run_benchmark(cfg, args.out, jobs=args.jobs)
    for suite, by in res.aggregate.items():
        for planner, agg in by.items():
            print(f"{suite:12s} {planner:7s} {agg['successes']:4d}/{agg['trials']:<4d} "
                  f"memory {agg['memory_bytes']} B")
    print(f"outputs in {args.out}")
    return 0


def cmd_verify(args) -> int:
    if args.world is None:
        lib = libio.load(args.lib)
        print(f"{args.lib}: {len(lib)} tuples, {len(lib.infeasible)} infeasible cells, format ok")
        return 0
    sc = load_scenario(args.world)
    behavior = _behavior_override(sc, args.behavior)
    lib = libio.load(args.lib, sc.world, behavior)
    rep = verify_library(sc.world, lib, behavior)
    for p in rep.problems:
        print(p)
    print(f"{'ok' if rep.ok else 'FAILED'}: {len(lib)} tuples, {rep.cells_checked} in-ball cells re-verified")
    return 0 if rep.ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bctmp", description="Behavior-aware constant-time motion planning")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("preprocess", help="build a plan library for a scenario")
    pp.add_argument("--world", required=True, help="scenario file or bundled name")
    pp.add_argument("--behavior", help="behavior parameter JSON overriding the scenario's")
    pp.add_argument("--out", required=True)
    pp.add_argument("--seed", type=int, default=0)
    pp.add_argument("--timeout", type=float, default=5.0, help="planner timeout per call, seconds")
    pp.add_argument("--jobs", type=int, default=1, help="worker cap for per-candidate evaluation")
    pp.set_defaults(func=cmd_preprocess)

    pq = sub.add_parser("query", help="answer one goal pose from a library")
    pq.add_argument("--lib", required=True)
    pq.add_argument("--world", required=True)
    pq.add_argument("--behavior")
    pq.add_argument("--goal", required=True, type=_goal, help="x,y,theta (write --goal=-0.1,... for negatives)")
    pq.add_argument("--seed", type=int, default=0)
    pq.add_argument("--json", action="store_true")
    pq.add_argument("--verify", action="store_true", help="re-verify every tuple before answering")
    pq.set_defaults(func=cmd_query)

    pb = sub.add_parser("bench", help="run the planner comparison")
    pb.add_argument("--config", required=True)
    pb.add_argument("--out", required=True)
    pb.add_argument("--jobs", type=int, default=1)
    pb.set_defaults(func=cmd_bench)

    pv = sub.add_parser("verify", help="check a library file; with --world, re-verify every tuple")
    pv.add_argument("--lib", required=True)
    pv.add_argument("--world")
    pv.add_argument("--behavior")
    pv.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except libio.LibraryError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
