"""Plot success rates, failure stages, memory and planning times from a bench output directory.

    python scripts/plot_results.py results/

Needs matplotlib (``pip install -e .[plot]``).
"""

from __future__ import annotations

import csv
import sys
from collections import defaultdict
from pathlib import Path

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit("plotting needs matplotlib: pip install -e .[plot]")

STAGES = ("InitStateSearch", "MotionPlanning", "BehaviorExecution")


def rows(path: Path):
    with path.open() as f:
        return list(csv.DictReader(f))


def failure_stages(out: Path, data):
    suites = sorted({r["suite"] for r in data})
    fig, axes = plt.subplots(1, len(suites), figsize=(5 * len(suites), 3.5), squeeze=False)
    for ax, suite in zip(axes[0], suites):
        sel = [r for r in data if r["suite"] == suite]
        names = [r["planner"] for r in sel]
        bottom = [0.0] * len(sel)
        for stage in STAGES:
            vals = [int(r[stage]) for r in sel]
            ax.bar(names, vals, bottom=bottom, label=stage)
            bottom = [b + v for b, v in zip(bottom, vals)]
        ax.set_title(suite)
        ax.set_ylabel("failed trials")
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out / "failure_stages.png", dpi=150)


def memory(out: Path, data):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    labels = [f"{r['suite']}\n{r['planner']}" for r in data if r["planner"] != "online"]
    vals = [int(r["memory_bytes"]) / 1024 for r in data if r["planner"] != "online"]
    ax.bar(labels, vals)
    ax.set_ylabel("KiB")
    ax.tick_params(axis="x", labelsize=7)
    fig.tight_layout()
    fig.savefig(out / "memory.png", dpi=150)


def planning_times(out: Path, data):
    by = defaultdict(list)
    for r in data:
        by[(r["suite"], r["planner"])].append(float(r["planning_time_s"]) * 1e3)
    keys = sorted(by)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.boxplot([by[k] for k in keys])
    ax.set_xticks(range(1, len(keys) + 1), [f"{s}\n{p}" for s, p in keys])
    ax.set_yscale("log")
    ax.set_ylabel("planning time (ms)")
    ax.tick_params(axis="x", labelsize=7)
    fig.tight_layout()
    fig.savefig(out / "planning_times.png", dpi=150)


def main() -> None:
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "results")
    plot = out / "plotdata"
    failure_stages(out, rows(plot / "success_rates.csv"))
    memory(out, rows(plot / "memory.csv"))
    planning_times(out, rows(plot / "planning_times.csv"))
    print(f"figures written to {out}")


if __name__ == "__main__":
    main()
