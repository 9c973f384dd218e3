"""Comparison planners: online init-state search plus RRT, the same over a roadmap, and vanilla CTMP.

Every planner returns a :class:`TrialResult`. Planning time covers everything
needed to produce the motion (init-state search and path planning, or the
library lookup); the simulated execution afterwards is not timed.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass

import numpy as np

from .behaviors import Behavior
from .geometry import Pose2
from .library import (
    AttractorTuple,
    Infeasibility,
    LibraryKind,
    PlanLibrary,
    find_containing_tuple,
)
from .planner import PlannerBudget, Roadmap, plan_on_roadmap, plan_path
from .query import PROVEN_INFEASIBLE, FullPlan, QueryFailure, execute_plan, query
from .roi import DEFAULT_ANGLE_WEIGHT, RegionOfInterest
from .seeding import derive_seed
from .world import World, ik_batch, in_collision, tool_pose

log = logging.getLogger(__name__)


class Stage(enum.Enum):
    INIT_STATE_SEARCH = "InitStateSearch"
    MOTION_PLANNING = "MotionPlanning"
    BEHAVIOR_EXECUTION = "BehaviorExecution"
    NONE = "None"


@dataclass
class TrialResult:
    planner: str
    success: bool
    planning_time: float
    stage: Stage
    detail: str = ""
    verified: bool | None = None

    def __post_init__(self):
        if self.success != (self.stage is Stage.NONE):
            raise ValueError("success must coincide with an empty failure stage")
        self.planning_time = max(0.0, self.planning_time)


def _finish(name, behavior, world, state, goal, seed, elapsed, detail="") -> TrialResult:
    res = behavior.rollout(world, state, goal, seed=seed)
    if res.success:
        return TrialResult(name, True, elapsed, Stage.NONE, detail)
    return TrialResult(name, False, elapsed, Stage.BEHAVIOR_EXECUTION, f"{detail}{res.reason.value}")


def _search_and_plan(name, world, behavior, goal, budget, seed, planner) -> TrialResult:
    t0 = time.perf_counter()
    deadline = t0 + budget.timeout
    candidates = behavior.get_init_states(world, goal)
    if not candidates:
        return TrialResult(name, False, time.perf_counter() - t0, Stage.INIT_STATE_SEARCH, "EmptyInitSet")
    for k, s in enumerate(candidates):
        left = deadline - time.perf_counter()
        if left <= 0:
            break
        path = planner(s, PlannerBudget(left, budget.max_iterations), derive_seed(seed, "plan", k))
        if path is not None:
            elapsed = time.perf_counter() - t0
            return _finish(name, behavior, world, s, goal, seed, elapsed, f"candidate {k}: ")
    return TrialResult(name, False, time.perf_counter() - t0, Stage.MOTION_PLANNING, "NoPath")


def run_online_baseline(world: World, behavior: Behavior, goal: Pose2, budget: PlannerBudget = PlannerBudget(),
                        seed: int = 0) -> TrialResult:
    """Init states computed online, RRT to each in ranked order, roll out from the first one reached."""
    def planner(s, b, sd):
        return plan_path(world, world.home_state, s, b, seed=sd)

    return _search_and_plan("online", world, behavior, goal, budget, seed, planner)


def run_prm_baseline(world: World, roadmap: Roadmap, behavior: Behavior, goal: Pose2,
                     budget: PlannerBudget = PlannerBudget(), seed: int = 0) -> TrialResult:
    def planner(s, b, sd):
        return plan_on_roadmap(world, roadmap, world.home_state, s, b, seed=sd)

    return _search_and_plan("prm", world, behavior, goal, budget, seed, planner)


def build_vanilla_library(world: World, behavior: Behavior, region: RegionOfInterest, snap_tolerance: float,
                          budget: PlannerBudget = PlannerBudget(), seed: int = 0) -> PlanLibrary:
    """One stored path per TCP cell of the hand-authored region, with no behavior validation.

    Each tuple's pose is a TCP pose and its radius is the snap tolerance, so the
    shared containment lookup doubles as the snap test.
    """
    centers = region.centers
    flange = centers.copy()
    flange[:, 0] -= world.gripper_depth * np.cos(centers[:, 2])
    flange[:, 1] -= world.gripper_depth * np.sin(centers[:, 2])
    sols = ik_batch(world, flange, seeds=behavior.spec.ik_seeds) if len(centers) else []
    home = world.home_state
    tuples = []
    missing: dict[int, Infeasibility] = {}
    for c, cand in enumerate(sols):
        free = [q for q in cand if not in_collision(world, q)]
        if not free:
            missing[c] = Infeasibility.EMPTY_INIT_SET
            continue
        q = min(free, key=lambda s: float(np.linalg.norm(s - home)))
        path = plan_path(world, home, q, budget, seed=derive_seed(seed, "vanilla", c))
        if path is None:
            missing[c] = Infeasibility.NO_PATH
            continue
        tuples.append(AttractorTuple(Pose2.from_array(centers[c]), q, snap_tolerance, path))
    return PlanLibrary(
        roi=region, tuples=tuples, infeasible=missing, angle_weight=DEFAULT_ANGLE_WEIGHT,
        world_fingerprint=world.fingerprint(), behavior_fingerprint=behavior.fingerprint(), dof=world.dof,
        kind=LibraryKind.VANILLA, seed=seed,
    )


def run_vanilla_ctmp_baseline(world: World, library: PlanLibrary, behavior: Behavior, goal: Pose2,
                              seed: int = 0) -> TrialResult:
    """Init states online, then the stored path whose end TCP is nearest one of them."""
    t0 = time.perf_counter()
    candidates = behavior.get_init_states(world, goal)
    if not candidates:
        return TrialResult("vctmp", False, time.perf_counter() - t0, Stage.INIT_STATE_SEARCH, "EmptyInitSet")
    for k, s in enumerate(candidates):
        hit = find_containing_tuple(library, tool_pose(world, s))
        if hit is not None:
            elapsed = time.perf_counter() - t0
            return _finish("vctmp", behavior, world, hit[1].s_attr, goal, seed, elapsed,
                           f"candidate {k} -> stored {hit[0]}: ")
    return TrialResult("vctmp", False, time.perf_counter() - t0, Stage.MOTION_PLANNING, "NoStoredPath")


def _stage_for(fail: QueryFailure) -> Stage:
    if fail.infeasibility is Infeasibility.NO_PATH:
        return Stage.MOTION_PLANNING
    return Stage.INIT_STATE_SEARCH


def run_bctmp(world: World, library: PlanLibrary, behavior: Behavior, goal: Pose2, seed: int = 0,
              verify: bool = True) -> tuple[TrialResult, FullPlan | QueryFailure]:
    plan = query(world, library, goal, behavior, seed=seed)
    if isinstance(plan, QueryFailure):
        detail = str(plan) if plan.kind == PROVEN_INFEASIBLE else plan.kind
        return TrialResult("bctmp", False, plan.lookup_time, _stage_for(plan), detail), plan
    verified = None
    if verify:
        verified = execute_plan(world, plan, behavior).success
    ok = plan.success and verified is not False
    stage = Stage.NONE if ok else Stage.BEHAVIOR_EXECUTION
    detail = f"tuple {plan.tuple_index}" + ("" if ok else f": {plan.rollout.reason.value}")
    return TrialResult("bctmp", ok, plan.lookup_time, stage, detail, verified), plan
