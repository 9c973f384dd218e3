"""Run the planner comparison and a lookup timing probe, writing everything under one directory.

    python scripts/run_experiments.py --config configs/bench.json --out results/
"""

from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path

import numpy as np

from bctmp import library as libio
from bctmp.bench import BenchConfig, run_benchmark
from bctmp.geometry import Pose2
from bctmp.query import timing_probe
from bctmp.scenario import load_scenario

ROOT = Path(__file__).resolve().parents[1]


def lookup_timing(art_dir: Path, worlds, n: int = 1000, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    out = {}
    for name in worlds:
        path = art_dir / f"{name}-bctmp-0.bctmp"
        if not path.exists():
            continue
        sc = load_scenario(name)
        lib = libio.load(path, sc.world, sc.behavior)
        centres = sc.roi.centers
        picks = centres[rng.integers(len(centres), size=n)]
        picks += rng.uniform(-0.5, 0.5, size=picks.shape) * np.array(sc.roi.resolution)
        stats = timing_probe(lib, [Pose2(*p) for p in picks])
        stats.pop("evals_per_query")
        out[name] = stats
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default=str(ROOT / "configs" / "bench.json"))
    ap.add_argument("--out", default=str(ROOT / "results"))
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")

    cfg = BenchConfig.load(args.config)
    out = Path(args.out)
    res = run_benchmark(cfg, out, jobs=args.jobs)
    for suite, by in res.aggregate.items():
        for planner, a in by.items():
            stages = ", ".join(f"{k} {v}" for k, v in a["failures_by_stage"].items() if v)
            print(f"{suite:12s} {planner:7s} {a['successes']:4d}/{a['trials']:<4d} {a['memory_bytes']:>8d} B"
                  f"  {stages}")

    art = Path(cfg.artifacts) if cfg.artifacts else out / "artifacts"
    timing = lookup_timing(art, [s.scenario for s in cfg.suites])
    (out / "lookup_timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
    for name, t in timing.items():
        print(f"{name}: |L|={t['tuples']} lookup p50 {t['p50'] * 1e6:.1f} us, p99 {t['p99'] * 1e6:.1f} us")


if __name__ == "__main__":
    main()
