"""Brute-force per-cell feasibility: init states, a path from home, a rollout from that state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .behaviors import Behavior
from .library import Infeasibility
from .planner import PlannerBudget, plan_path
from .preprocess import cell_seed, plan_seed
from .roi import RegionOfInterest
from .world import World


@dataclass(frozen=True)
class CellVerdict:
    feasible: bool
    reason: Infeasibility | None
    candidate: int | None = None


def cell_feasibility(world: World, behavior: Behavior, roi: RegionOfInterest, cell: int,
                     budget: PlannerBudget = PlannerBudget(), seed: int = 0) -> CellVerdict:
    w = roi.center(cell)
    candidates = behavior.get_init_states(world, w)
    if not candidates:
        return CellVerdict(False, Infeasibility.EMPTY_INIT_SET)
    pathable = False
    for k, s in enumerate(candidates):
        if plan_path(world, world.home_state, s, budget, seed=plan_seed(seed, s)) is None:
            continue
        pathable = True
        if behavior.rollout(world, s, w, seed=cell_seed(seed, cell)).success:
            return CellVerdict(True, None, k)
    return CellVerdict(False, Infeasibility.ROLLOUT_FAILED if pathable else Infeasibility.NO_PATH)


def feasibility_map(world: World, behavior: Behavior, roi: RegionOfInterest, budget: PlannerBudget = PlannerBudget(),
                    seed: int = 0, cells=None) -> dict[int, CellVerdict]:
    cells = range(len(roi)) if cells is None else cells
    return {int(c): cell_feasibility(world, behavior, roi, int(c), budget, seed) for c in cells}


def feasible_cells(verdicts: dict[int, CellVerdict]) -> np.ndarray:
    return np.array(sorted(c for c, v in verdicts.items() if v.feasible), dtype=np.int64)
