"""Offline coverage of the region of interest by verified attractor neighborhoods."""

from __future__ import annotations

import heapq
import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .behaviors import Behavior
from .library import AttractorTuple, Infeasibility, LibraryKind, PlanLibrary
from .planner import Path, PlannerBudget, plan_path
from .roi import DEFAULT_ANGLE_WEIGHT, RegionOfInterest, object_distance
from .seeding import derive_seed
from .world import World, in_collision

log = logging.getLogger(__name__)

UNCOVERED, COVERED, INFEASIBLE = 0, 1, 2


def plan_seed(seed: int, goal) -> int:
    return derive_seed(seed, "plan", np.asarray(goal, dtype=float))


def cell_seed(seed: int, cell: int) -> int:
    """Perception seed for the rollout that verifies ``cell``; shared by every candidate."""
    return derive_seed(seed, "rollout", int(cell))


@dataclass
class CoverageState:
    roi: RegionOfInterest
    status: np.ndarray = None
    frontier: list[deque] = None
    infeasible: dict[int, Infeasibility] = field(default_factory=dict)

    def __post_init__(self):
        if self.status is None:
            self.status = np.zeros(len(self.roi), dtype=np.int8)
        if self.frontier is None:
            self.frontier = [deque() for _ in range(self.roi.n_regions)]

    def covered(self, region: int | None = None) -> np.ndarray:
        cells = np.flatnonzero(self.status == COVERED)
        return cells if region is None else cells[self.roi.cell_region[cells] == region]

    def uncovered(self, region: int | None = None) -> np.ndarray:
        cells = np.flatnonzero(self.status == UNCOVERED)
        return cells if region is None else cells[self.roi.cell_region[cells] == region]

    def mark_covered(self, cells) -> int:
        cells = np.asarray(list(cells), dtype=np.int64)
        fresh = int(np.count_nonzero(self.status[cells] == UNCOVERED)) if len(cells) else 0
        if len(cells):
            if np.any(self.status[cells] == INFEASIBLE):
                raise ValueError("cannot cover a cell proven infeasible")
            self.status[cells] = COVERED
        return fresh

    def mark_infeasible(self, cell: int, reason: Infeasibility) -> None:
        if self.status[cell] == COVERED:
            raise ValueError("cannot mark a covered cell infeasible")
        self.status[cell] = INFEASIBLE
        self.infeasible[int(cell)] = reason

    def push_frontier(self, cells) -> None:
        for c in cells:
            if self.status[c] == UNCOVERED:
                self.frontier[int(self.roi.cell_region[c])].append(int(c))


def sample_valid_placement(coverage: CoverageState, region: int | None = None) -> int | None:
    """Next cell to seed an attractor from: frontier head first, else the lowest uncovered cell.

    Returns ``None`` once the region (or the whole RoI) is exhausted.
    """
    regions = range(coverage.roi.n_regions) if region is None else [region]
    for g in regions:
        queue = coverage.frontier[g]
        while queue:
            c = queue.popleft()
            if coverage.status[c] == UNCOVERED:
                return c
    left = coverage.uncovered(region)
    return int(left[0]) if len(left) else None


@dataclass
class Neighborhood:
    cells: np.ndarray
    r: float
    failures: list[int]
    rollouts: int


def _unit_radius(roi: RegionOfInterest, angle_weight: float) -> float:
    dx, dy, dth = roi.resolution
    return min(dx, dy, angle_weight * dth)


def expand_neighborhood(world: World, cell: int, state, behavior: Behavior, roi: RegionOfInterest,
                        coverage: CoverageState, seed: int = 0,
                        angle_weight: float = DEFAULT_ANGLE_WEIGHT) -> Neighborhood:
    """Grow the set of cells whose rollout from ``state`` succeeds, nearest first.

    The attractor is the centre of ``cell`` and its rollout is assumed to have
    succeeded. The radius stops just short of the nearest cell that is not
    verified: a rollout failure, an infeasible cell, or a cell never reached.
    """
    centers = roi.centers
    w0 = centers[cell]
    dist = object_distance(centers, w0, angle_weight)
    ok = np.zeros(len(roi), dtype=bool)
    ok[cell] = True
    seen = {cell}
    heap = []
    for nb in roi.neighbors(cell):
        seen.add(nb)
        heapq.heappush(heap, (dist[nb], nb))
    limit = math.inf
    failures: list[int] = []
    rollouts = 0
    while heap:
        d, c = heapq.heappop(heap)
        if d >= limit:
            break
        if coverage.status[c] == INFEASIBLE:
            limit = d
            continue
        rollouts += 1
        res = behavior.rollout(world, state, roi.center(c), seed=cell_seed(seed, c))
        if not res.success:
            failures.append(c)
            limit = d
            continue
        ok[c] = True
        for nb in roi.neighbors(c):
            if nb not in seen:
                seen.add(nb)
                heapq.heappush(heap, (dist[nb], nb))
    if ok.all():
        r = max(float(dist.max()), _unit_radius(roi, angle_weight))
    else:
        r = math.nextafter(float(dist[~ok].min()), 0.0)
    cells = np.flatnonzero(ok & (dist <= r))
    return Neighborhood(cells, r, failures, rollouts)


@dataclass
class Candidate:
    index: int
    state: np.ndarray
    path: Path | None
    hood: Neighborhood | None
    rollouts: int = 0


@dataclass
class Rejected:
    reason: Infeasibility
    rollouts: int = 0


def _try_candidate(world, cell, k, state, behavior, roi, coverage, budget, seed, angle_weight) -> Candidate:
    path = plan_path(world, world.home_state, state, budget, seed=plan_seed(seed, state))
    if path is None:
        return Candidate(k, state, None, None)
    res = behavior.rollout(world, state, roi.center(cell), seed=cell_seed(seed, cell))
    if not res.success:
        return Candidate(k, state, path, None, 1)
    hood = expand_neighborhood(world, cell, state, behavior, roi, coverage, seed, angle_weight)
    return Candidate(k, state, path, hood, 1 + hood.rollouts)


def construct_neighborhood(world: World, cell: int, candidates, behavior: Behavior, roi: RegionOfInterest,
                           coverage: CoverageState, budget: PlannerBudget = PlannerBudget(), seed: int = 0,
                           angle_weight: float = DEFAULT_ANGLE_WEIGHT, jobs: int = 1) -> Candidate | Rejected:
    """Plan, roll out and expand every candidate; keep the one with the largest radius.

    Ties go to the earlier candidate. Rejected carries NoPath when no
    candidate could be reached from home, RolloutFailed otherwise.
    """
    args = [(world, cell, k, np.asarray(s, dtype=float), behavior, roi, coverage, budget, seed, angle_weight)
            for k, s in enumerate(candidates)]
    if jobs > 1 and len(args) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda a: _try_candidate(*a), args))
    else:
        results = [_try_candidate(*a) for a in args]
    best = None
    for cand in results:
        if cand.hood is not None and (best is None or cand.hood.r > best.hood.r):
            best = cand
    rollouts = sum(c.rollouts for c in results)
    if best is None:
        pathable = any(c.path is not None for c in results)
        return Rejected(Infeasibility.ROLLOUT_FAILED if pathable else Infeasibility.NO_PATH, rollouts)
    best.rollouts = rollouts
    return best


def preprocess(world: World, roi: RegionOfInterest, behavior: Behavior, budget: PlannerBudget = PlannerBudget(),
               seed: int = 0, angle_weight: float = DEFAULT_ANGLE_WEIGHT, jobs: int = 1) -> PlanLibrary:
    """Cover every RoI cell with a verified attractor ball or record why it cannot be covered."""
    if in_collision(world, world.home_state):
        raise ValueError("home state is in collision")
    roi.check_resolution(behavior.spec.pos_tol, behavior.spec.ang_tol)
    coverage = CoverageState(roi)
    tuples: list[AttractorTuple] = []
    for region in range(roi.n_regions):
        while True:
            cell = sample_valid_placement(coverage, region)
            if cell is None:
                break
            w = roi.center(cell)
            candidates = behavior.get_init_states(world, w)
            if not candidates:
                coverage.mark_infeasible(cell, Infeasibility.EMPTY_INIT_SET)
                continue
            found = construct_neighborhood(world, cell, candidates, behavior, roi, coverage, budget, seed,
                                           angle_weight, jobs)
            if isinstance(found, Rejected):
                coverage.mark_infeasible(cell, found.reason)
                continue
            hood = found.hood
            fresh = coverage.mark_covered(hood.cells)
            coverage.push_frontier(hood.failures)
            tuples.append(AttractorTuple(w, found.state, hood.r, found.path))
            log.info(
                "tuple %d: w_attr=(%.4f, %.4f, %.4f) r=%.4f cells=%d new=%d path=%.3f rad rollouts=%d",
                len(tuples) - 1, w.x, w.y, w.theta, hood.r, len(hood.cells), fresh, found.path.length,
                found.rollouts,
            )
    return PlanLibrary(
        roi=roi, tuples=tuples, infeasible=dict(sorted(coverage.infeasible.items())), angle_weight=angle_weight,
        world_fingerprint=world.fingerprint(), behavior_fingerprint=behavior.fingerprint(), dof=world.dof,
        kind=LibraryKind.BCTMP, seed=seed,
    )


@dataclass
class VerifyReport:
    ok: bool
    problems: list[str]
    cells_checked: int


def verify_library(world: World, library: PlanLibrary, behavior: Behavior) -> VerifyReport:
    """Re-check every tuple: path endpoints and collisions, and a rollout for every in-ball cell."""
    problems: list[str] = []
    roi = library.roi
    checked = 0
    home = world.home_state
    for k, t in enumerate(library.tuples):
        if not np.allclose(t.tau.start, home) or not np.allclose(t.tau.end, t.s_attr):
            problems.append(f"tuple {k}: path does not run from home to the initiation state")
        if not t.tau.is_valid(world):
            problems.append(f"tuple {k}: path collides")
        if t.r <= 0:
            problems.append(f"tuple {k}: non-positive radius")
        d = object_distance(roi.centers, t.w_attr.as_array(), library.angle_weight)
        for c in np.flatnonzero(d <= t.r):
            checked += 1
            if c in library.infeasible:
                problems.append(f"tuple {k}: ball contains infeasible cell {c}")
                continue
            res = behavior.rollout(world, t.s_attr, roi.center(int(c)), seed=cell_seed(library.seed, int(c)))
            if not res.success:
                problems.append(f"tuple {k}: rollout fails for cell {c} ({res.reason.value})")
    covered = np.zeros(len(roi), dtype=bool)
    for t in library.tuples:
        covered |= object_distance(roi.centers, t.w_attr.as_array(), library.angle_weight) <= t.r
    for c in np.flatnonzero(~covered):
        if int(c) not in library.infeasible:
            problems.append(f"cell {c} neither covered nor recorded infeasible")
    return VerifyReport(not problems, problems, checked)
