"""Benchmark harness: identical trial sets for every planner, CSV/JSON outputs and plot data.

Outcome files (``results.csv``, ``aggregate.json``, ``plotdata/success_rates.csv``,
``plotdata/memory.csv``) depend only on the config and are byte-stable across
runs. Wall-clock numbers go to ``timings.csv``, ``timing_summary.json`` and
``plotdata/planning_times.csv``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import library as libio
from .baselines import (
    Stage,
    TrialResult,
    build_vanilla_library,
    run_bctmp,
    run_online_baseline,
    run_prm_baseline,
    run_vanilla_ctmp_baseline,
)
from .behaviors import BehaviorSpec
from .geometry import Pose2
from .library import LibraryKind, PlanLibrary
from .oracle import cell_feasibility
from .planner import PlannerBudget, build_roadmap
from .preprocess import preprocess
from .roi import RegionOfInterest
from .scenario import Scenario, load_scenario
from .seeding import derive_seed

log = logging.getLogger(__name__)

PLANNERS = ("bctmp", "online", "prm", "vctmp")
GRASP_TRIALS = 100
INSERT_TRIALS = 60


@dataclass
class TrialSet:
    world_id: str
    behavior_id: str
    goals: list[Pose2]
    seeds: list[int]
    cells: list[int]
    timeout: float

    def __len__(self) -> int:
        return len(self.goals)


def make_trial_set(scenario: Scenario, count: int, seed: int, timeout: float = 5.0, oracle_filter: bool = True,
                   oracle_seed: int | None = None) -> TrialSet:
    """Cell-centre goals drawn without replacement; with ``oracle_filter`` only oracle-feasible cells are kept."""
    roi = scenario.roi
    rng = np.random.default_rng(derive_seed(seed, "trials", scenario.name))
    order = rng.permutation(len(roi))
    behavior = scenario.behavior
    goals, seeds, cells = [], [], []
    for c in order:
        if len(goals) == count:
            break
        c = int(c)
        if oracle_filter:
            verdict = cell_feasibility(scenario.world, behavior, roi, c, PlannerBudget(timeout),
                                       seed if oracle_seed is None else oracle_seed)
            if not verdict.feasible:
                continue
        goals.append(roi.center(c))
        seeds.append(derive_seed(seed, "trial", len(goals) - 1))
        cells.append(c)
    return TrialSet(scenario.name, behavior.name, goals, seeds, cells, timeout)


@dataclass
class Suite:
    scenario: str
    trials: int
    timeout: float = 5.0
    planners: tuple[str, ...] = PLANNERS
    seed: int = 0
    behavior: dict | None = None
    oracle_filter: bool = True

    @classmethod
    def from_dict(cls, doc: dict, defaults: dict | None = None) -> "Suite":
        d = dict(defaults or {})
        d.update(doc)
        behavior = d.get("behavior")
        return cls(
            scenario=d["world"],
            trials=int(d.get("trials", 0)),
            timeout=float(d.get("timeout_s", 5.0)),
            planners=tuple(d.get("planners", PLANNERS)),
            seed=int(d.get("seed", 0)),
            behavior=behavior if isinstance(behavior, dict) else None,
            oracle_filter=bool(d.get("oracle_filter", True)),
        )


@dataclass
class BenchConfig:
    suites: list[Suite]
    artifacts: str | None = None
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "BenchConfig":
        base = {k: v for k, v in doc.items() if k not in ("suites", "artifacts")}
        if "suites" in doc:
            suites = [Suite.from_dict(s, base) for s in doc["suites"]]
        else:
            suites = [Suite.from_dict(base)]
        return cls(suites, doc.get("artifacts"), base_dir or Path.cwd())

    @classmethod
    def load(cls, path) -> "BenchConfig":
        p = Path(path)
        return cls.from_dict(json.loads(p.read_text()), p.parent)


def _resolve(base: Path, name: str) -> str:
    p = base / name
    return str(p) if p.exists() else name


def _suite_scenario(suite: Suite, base: Path) -> Scenario:
    sc = load_scenario(_resolve(base, suite.scenario))
    if suite.behavior is not None:
        sc = replace(sc, behavior_spec=BehaviorSpec.from_dict(suite.behavior))
    return sc


class Artifacts:
    """Libraries and roadmaps, loaded from the cache directory when fingerprints match, else built."""

    def __init__(self, directory: Path, jobs: int = 1):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.jobs = jobs
        self.build_times: dict[str, float] = {}

    def _get(self, key: str, world, behavior, build, region=None) -> PlanLibrary:
        path = self.dir / f"{key}.bctmp"
        if path.exists():
            try:
                lib = libio.load(path, world, behavior)
                if region is None or lib.roi == region:
                    return lib
                log.info("rebuilding %s: region changed", path.name)
            except libio.LibraryError as exc:
                log.info("rebuilding %s: %s", path.name, exc)
        t0 = time.perf_counter()
        lib = build()
        self.build_times[key] = time.perf_counter() - t0
        libio.save(lib, path)
        return lib

    def bctmp(self, sc: Scenario, seed: int) -> PlanLibrary:
        beh = sc.behavior
        return self._get(f"{sc.name}-bctmp-{seed}", sc.world, beh,
                         lambda: preprocess(sc.world, sc.roi, beh, seed=seed, angle_weight=sc.angle_weight,
                                            jobs=self.jobs), sc.roi)

    def vanilla(self, sc: Scenario, seed: int) -> PlanLibrary:
        if sc.vanilla is None:
            raise ValueError(f"scenario {sc.name!r} has no 'baselines.vanilla' section; add a TCP region")
        beh = sc.behavior
        return self._get(f"{sc.name}-vctmp-{seed}", sc.world, beh,
                         lambda: build_vanilla_library(sc.world, beh, sc.vanilla.region, sc.vanilla.snap_tolerance,
                                                       seed=seed), sc.vanilla.region)

    def roadmap(self, sc: Scenario) -> PlanLibrary:
        cfg = sc.roadmap

        def build():
            rm = build_roadmap(sc.world, cfg.vertices, cfg.connection_radius, cfg.seed)
            return PlanLibrary(roi=RegionOfInterest((), (1.0, 1.0, 1.0)), world_fingerprint=sc.world.fingerprint(),
                               dof=sc.world.dof, kind=LibraryKind.ROADMAP, seed=cfg.seed, roadmap=rm)

        return self._get(f"{sc.name}-roadmap-{cfg.seed}", sc.world, None, build)


@dataclass
class Row:
    suite: str
    trial: int
    cell: int
    goal: Pose2
    result: TrialResult


def run_suite(suite: Suite, artifacts: Artifacts, base: Path) -> tuple[list[Row], dict[str, int], TrialSet]:
    sc = _suite_scenario(suite, base)
    behavior = sc.behavior
    budget = PlannerBudget(suite.timeout)
    memory: dict[str, int] = {}
    libs = {}
    if "bctmp" in suite.planners:
        libs["bctmp"] = artifacts.bctmp(sc, suite.seed)
        memory["bctmp"] = libio.memory_report(libs["bctmp"])["serialized_bytes"]
    if "vctmp" in suite.planners:
        libs["vctmp"] = artifacts.vanilla(sc, suite.seed)
        memory["vctmp"] = libio.memory_report(libs["vctmp"])["serialized_bytes"]
    if "prm" in suite.planners:
        libs["prm"] = artifacts.roadmap(sc)
        memory["prm"] = libio.memory_report(libs["prm"])["serialized_bytes"]
    if "online" in suite.planners:
        memory["online"] = 0
    trials = make_trial_set(sc, suite.trials, suite.seed, suite.timeout, suite.oracle_filter, suite.seed)
    rows: list[Row] = []
    for i, (goal, tseed, cell) in enumerate(zip(trials.goals, trials.seeds, trials.cells)):
        for name in suite.planners:
            if name == "bctmp":
                res, _ = run_bctmp(sc.world, libs["bctmp"], behavior, goal, tseed)
            elif name == "online":
                res = run_online_baseline(sc.world, behavior, goal, budget, tseed)
            elif name == "prm":
                res = run_prm_baseline(sc.world, libs["prm"].roadmap, behavior, goal, budget, tseed)
            elif name == "vctmp":
                res = run_vanilla_ctmp_baseline(sc.world, libs["vctmp"], behavior, goal, tseed)
            else:
                raise ValueError(f"unknown planner {name!r}")
            rows.append(Row(sc.name, i, cell, goal, res))
        log.info("%s trial %d/%d done", sc.name, i + 1, len(trials))
    return rows, memory, trials


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v: float) -> str:
    return repr(float(v))


def aggregate(rows: list[Row], memory: dict[tuple[str, str], int]) -> dict:
    out: dict = {}
    keys = sorted({(r.suite, r.result.planner) for r in rows} | set(memory))
    for suite, planner in keys:
        sel = [r for r in rows if r.suite == suite and r.result.planner == planner]
        n = len(sel)
        wins = sum(r.result.success for r in sel)
        stages = Counter(r.result.stage.value for r in sel if not r.result.success)
        out.setdefault(suite, {})[planner] = {
            "trials": n,
            "successes": wins,
            "success_rate": wins / n if n else 0.0,
            "failures_by_stage": {s.value: stages.get(s.value, 0) for s in Stage if s is not Stage.NONE},
            "memory_bytes": memory.get((suite, planner), 0),
        }
    return out


def timing_summary(rows: list[Row]) -> dict:
    out: dict = {}
    for suite, planner in sorted({(r.suite, r.result.planner) for r in rows}):
        t = np.array([r.result.planning_time for r in rows if r.suite == suite and r.result.planner == planner])
        ok = np.array([r.result.planning_time for r in rows
                       if r.suite == suite and r.result.planner == planner and r.result.success])
        entry = {"trials": len(t)}
        for label, arr in (("all", t), ("successful", ok)):
            if len(arr):
                entry[label] = {
                    "p50": float(np.percentile(arr, 50)), "p90": float(np.percentile(arr, 90)),
                    "p99": float(np.percentile(arr, 99)), "max": float(arr.max()), "mean": float(arr.mean()),
                }
        out.setdefault(suite, {})[planner] = entry
    return out


@dataclass
class BenchResult:
    rows: list[Row]
    aggregate: dict
    timings: dict
    memory: dict
    trial_sets: list[TrialSet]
    build_times: dict


def run_benchmark(config: BenchConfig, out_dir, jobs: int = 1) -> BenchResult:
    out = Path(out_dir)
    (out / "plotdata").mkdir(parents=True, exist_ok=True)
    art_dir = Path(config.artifacts) if config.artifacts else out / "artifacts"
    if not art_dir.is_absolute() and config.artifacts:
        art_dir = config.base_dir / art_dir
    artifacts = Artifacts(art_dir, jobs)
    rows: list[Row] = []
    memory: dict[tuple[str, str], int] = {}
    sets = []
    for suite in config.suites:
        r, mem, ts = run_suite(suite, artifacts, config.base_dir)
        rows += r
        sets.append(ts)
        name = ts.world_id
        memory.update({(name, k): v for k, v in mem.items()})
    agg = aggregate(rows, memory)
    tim = timing_summary(rows)

    (out / "results.csv").write_text(_csv(
        ["suite", "planner", "trial", "cell", "goal_x", "goal_y", "goal_theta", "success", "stage", "detail"],
        [[r.suite, r.result.planner, r.trial, r.cell, _fmt(r.goal.x), _fmt(r.goal.y), _fmt(r.goal.theta),
          int(r.result.success), r.result.stage.value, r.result.detail] for r in rows],
    ))
    (out / "aggregate.json").write_text(json.dumps(agg, indent=2, sort_keys=True) + "\n")
    (out / "plotdata" / "success_rates.csv").write_text(_csv(
        ["suite", "planner", "success_rate"] + [s.value for s in Stage if s is not Stage.NONE],
        [[s, p, _fmt(v["success_rate"])] + [v["failures_by_stage"][k.value] for k in Stage if k is not Stage.NONE]
         for s, by in agg.items() for p, v in by.items()],
    ))
    (out / "plotdata" / "memory.csv").write_text(_csv(
        ["suite", "planner", "memory_bytes"], [[s, p, b] for (s, p), b in sorted(memory.items())],
    ))
    (out / "timings.csv").write_text(_csv(
        ["suite", "planner", "trial", "planning_time_s"],
        [[r.suite, r.result.planner, r.trial, _fmt(r.result.planning_time)] for r in rows],
    ))
    (out / "plotdata" / "planning_times.csv").write_text(_csv(
        ["suite", "planner", "planning_time_s", "success"],
        [[r.suite, r.result.planner, _fmt(r.result.planning_time), int(r.result.success)] for r in rows],
    ))
    (out / "timing_summary.json").write_text(json.dumps(
        {"online": tim, "offline_build_s": artifacts.build_times}, indent=2, sort_keys=True) + "\n")
    return BenchResult(rows, agg, tim, memory, sets, artifacts.build_times)
