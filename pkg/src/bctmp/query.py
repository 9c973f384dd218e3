"""Online phase: containment lookup, path retrieval, and simulated execution."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import instrument
from .behaviors import Behavior, PerceptionModel, RolloutResult
from .geometry import Pose2, wrap_angle
from .library import Infeasibility, PlanLibrary, _check_fingerprints, find_containing_tuple
from .planner import Path
from .world import EDGE_RESOLUTION, World, edge_collision_free, in_collision, tool_pose

NOT_COVERED = "NotCovered"
PROVEN_INFEASIBLE = "ProvenInfeasible"


@dataclass(frozen=True)
class QueryFailure:
    kind: str
    infeasibility: Infeasibility | None = None
    lookup_time: float = 0.0

    def __str__(self) -> str:
        if self.infeasibility is None:
            return self.kind
        return f"{self.kind}({self.infeasibility.label})"


@dataclass
class FullPlan:
    tau: Path
    trajectory: np.ndarray
    tuple_index: int
    goal: Pose2
    seed: int
    rollout: RolloutResult
    lookup_time: float
    total_time: float
    lookup_counters: instrument.Counters = field(default_factory=instrument.Counters)
    perception: PerceptionModel | None = None

    @property
    def success(self) -> bool:
        return self.rollout.success


def query(world: World, library: PlanLibrary, w_g: Pose2, behavior: Behavior,
          perception: PerceptionModel | None = None, seed: int = 0) -> FullPlan | QueryFailure:
    """Serve ``w_g`` from the library, then simulate the stored path and the rollout toward ``w_g``."""
    _check_fingerprints(library, world, behavior)
    t0 = time.perf_counter()
    with instrument.measure() as lookup:
        hit = find_containing_tuple(library, w_g)
        tau = hit[1].tau if hit is not None else None
    t_lookup = time.perf_counter() - t0
    if hit is None:
        if not library.roi.contains(w_g):
            return QueryFailure(NOT_COVERED, None, t_lookup)
        reason = library.infeasible_class(library.roi.locate(w_g))
        if reason is not None:
            return QueryFailure(PROVEN_INFEASIBLE, reason, t_lookup)
        return QueryFailure(NOT_COVERED, None, t_lookup)
    k, tup = hit
    perception = perception if perception is not None else behavior.perception()
    res = behavior.rollout(world, tup.s_attr, w_g, perception, seed)
    total = time.perf_counter() - t0
    return FullPlan(tau, res.trajectory, k, w_g, seed, res, t_lookup, total, lookup, perception)


@dataclass
class ExecutionReport:
    success: bool
    violations: list[tuple[str, int]]
    position_error: float
    angle_error: float
    steps: int
    reason: str


def execute_plan(world: World, plan: FullPlan, behavior: Behavior) -> ExecutionReport:
    """Re-simulate path plus rollout, checking every edge at twice the planning resolution."""
    violations: list[tuple[str, int]] = []
    res = EDGE_RESOLUTION / 2
    wps = plan.tau.waypoints
    if in_collision(world, wps[0]):
        violations.append(("tau", 0))
    for i in range(len(wps) - 1):
        if not edge_collision_free(world, wps[i], wps[i + 1], res):
            violations.append(("tau", i))
    again = behavior.rollout(world, wps[-1], plan.goal, plan.perception, plan.seed)
    traj = again.trajectory
    if len(plan.trajectory) and not np.allclose(plan.trajectory[0], wps[-1]):
        violations.append(("behavior_start", 0))
    if traj.shape != plan.trajectory.shape or not np.array_equal(traj, plan.trajectory):
        violations.append(("behavior_replay", 0))
    for i in range(len(traj) - 1):
        if not edge_collision_free(world, traj[i], traj[i + 1], res):
            violations.append(("behavior", i))
            break
    if len(traj):
        tcp = tool_pose(world, traj[-1])
    else:
        tcp = tool_pose(world, wps[-1])
    key = behavior.terminal_pose(plan.goal, tool_pose(world, wps[-1]).theta)
    pos_err = float(np.hypot(key.x - tcp.x, key.y - tcp.y))
    ang_err = abs(wrap_angle(key.theta - tcp.theta))
    ok = again.success and not violations
    return ExecutionReport(ok, violations, pos_err, ang_err, len(wps) - 1 + max(len(traj) - 1, 0), again.reason.value)


def timing_probe(library: PlanLibrary, queries) -> dict:
    """Wall-clock statistics of the lookup alone, plus the metric evaluations each query cost."""
    queries = list(queries)
    if not queries:
        raise ValueError("timing probe needs at least one query")
    times = np.empty(len(queries))
    evals = []
    for i, q in enumerate(queries):
        before = instrument.COUNTERS.snapshot()
        t0 = time.perf_counter()
        find_containing_tuple(library, q)
        times[i] = time.perf_counter() - t0
        evals.append(instrument.COUNTERS.snapshot().distance_evals - before.distance_evals)
    return {
        "queries": len(queries),
        "p50": float(np.percentile(times, 50)),
        "p99": float(np.percentile(times, 99)),
        "max": float(times.max()),
        "evals_per_query": evals,
        "tuples": len(library),
    }
