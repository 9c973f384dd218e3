"""Compare a preprocessed library against the per-cell brute-force oracle on a scenario's RoI.

    python scripts/coverage_check.py --world open_shelf --out results/coverage.json
"""

from __future__ import annotations

import argparse
import json
import time
from collections import Counter
from pathlib import Path

from bctmp import library as libio
from bctmp.oracle import feasibility_map
from bctmp.preprocess import preprocess
from bctmp.query import FullPlan, execute_plan, query
from bctmp.scenario import load_scenario


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--world", default="open_shelf")
    ap.add_argument("--lib", help="existing library; built from the scenario when omitted")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="coverage.json")
    args = ap.parse_args()

    sc = load_scenario(args.world)
    beh = sc.behavior
    t0 = time.perf_counter()
    lib = (libio.load(args.lib, sc.world, beh) if args.lib
           else preprocess(sc.world, sc.roi, beh, seed=args.seed, angle_weight=sc.angle_weight))
    t_lib = time.perf_counter() - t0
    t0 = time.perf_counter()
    oracle = feasibility_map(sc.world, beh, sc.roi, seed=args.seed)
    t_oracle = time.perf_counter() - t0

    feasible = {c for c, v in oracle.items() if v.feasible}
    covered, failed = set(), []
    for c in range(len(sc.roi)):
        plan = query(sc.world, lib, sc.roi.center(c), beh)
        if isinstance(plan, FullPlan):
            covered.add(c)
            if not execute_plan(sc.world, plan, beh).success:
                failed.append(c)
    summary = {
        "cells": len(sc.roi),
        "tuples": len(lib),
        "oracle_feasible": len(feasible),
        "covered": len(covered),
        "feasible_not_covered": sorted(feasible - covered),
        "covered_beyond_oracle": len(covered - feasible),
        "failed_execution": failed,
        "uncovered_classes": dict(Counter(v.label for v in lib.infeasible.values())),
        "library_s": round(t_lib, 2),
        "oracle_s": round(t_oracle, 2),
    }
    Path(args.out).write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps({k: v for k, v in summary.items() if not isinstance(v, list)}, indent=2))


if __name__ == "__main__":
    main()
