import math

import numpy as np
import pytest

from bctmp.library import AttractorTuple, Infeasibility
from bctmp.oracle import feasibility_map
from bctmp.preprocess import (
    CoverageState,
    Rejected,
    construct_neighborhood,
    expand_neighborhood,
    preprocess,
    sample_valid_placement,
    verify_library,
)
from bctmp.query import FullPlan, execute_plan, query
from bctmp.roi import Box, RegionOfInterest, object_distance

from conftest import arm, rect

# three cells 5 cm apart on a line through (0.6, 0.1, 0.3)
LINE = RegionOfInterest.grid((0.525, 0.075, 0.25), (0.675, 0.125, 0.35), (3, 1, 1))
# a 3 mm sliver at a fingertip of the +x neighbor's grasp, for one approach branch only
SLIVER = arm(obstacles=[rect(0.6618, 0.0493, 0.6678, 0.0553)], home=(1.8, -1.0, -1.0))
SEALED = arm(obstacles=[rect(0.09, -1.3, 0.14, -0.1), rect(-0.14, -1.3, -0.09, -0.1)], home=(-math.pi / 2, 0.0, 0.0))
STRADDLE = RegionOfInterest.grid((0.86, -0.06, -math.pi / 8), (0.98, 0.06, math.pi / 8), (6, 3, 2))


# -- placement queue ------------------------------------------------------------


def test_placement_exhausted():
    cov = CoverageState(LINE)
    cov.mark_covered([0, 1, 2])
    assert sample_valid_placement(cov) is None
    assert sample_valid_placement(CoverageState(RegionOfInterest((), (1, 1, 1)))) is None


def test_placement_frontier_first():
    cov = CoverageState(LINE)
    cov.push_frontier([2])
    assert sample_valid_placement(cov) == 2
    assert sample_valid_placement(cov) == 0


def test_placement_skips_stale_frontier():
    cov = CoverageState(LINE)
    cov.push_frontier([2, 1])
    cov.mark_covered([2])
    assert sample_valid_placement(cov) == 1


def test_placement_last_uncovered():
    cov = CoverageState(LINE)
    cov.mark_covered([0, 2])
    assert sample_valid_placement(cov) == 1


def test_frontier_queues_are_per_region():
    roi = RegionOfInterest((Box((0, 0, 0), (0.2, 0.1, 0.1)), Box((0, 0.3, 0), (0.2, 0.4, 0.1))), (0.1, 0.1, 0.1))
    cov = CoverageState(roi)
    cov.push_frontier([3, 1])
    assert list(cov.frontier[0]) == [1] and list(cov.frontier[1]) == [3]
    assert sample_valid_placement(cov, region=1) == 3


def test_coverage_state_guards():
    cov = CoverageState(LINE)
    cov.mark_infeasible(0, Infeasibility.NO_PATH)
    with pytest.raises(ValueError):
        cov.mark_covered([0])
    cov.mark_covered([1])
    with pytest.raises(ValueError):
        cov.mark_infeasible(1, Infeasibility.NO_PATH)
    assert cov.mark_covered([1, 2]) == 1


# -- expansion and selection ------------------------------------------------------


def test_expand_everywhere_in_open_space(open_world, grasp):
    roi = RegionOfInterest.grid((0.58, 0.08, 0.2), (0.62, 0.12, 0.4), (2, 2, 2))
    cell = 0
    s = grasp.get_init_states(open_world, roi.center(cell))[0]
    hood = expand_neighborhood(open_world, cell, s, grasp, roi, CoverageState(roi))
    assert hood.failures == []
    assert list(hood.cells) == list(range(len(roi)))
    assert hood.r >= object_distance(roi.centers, roi.centers[cell]).max()


def test_expand_stops_at_adjacent_failure(grasp):
    cands = grasp.get_init_states(SLIVER, LINE.center(1))
    hood = expand_neighborhood(SLIVER, 1, cands[0], grasp, LINE, CoverageState(LINE))
    assert hood.failures == [2]
    assert list(hood.cells) == [1]
    dx = LINE.resolution[0]
    assert 0 < hood.r < dx * (1 + 1e-9)


def test_construct_picks_largest_radius(grasp):
    cands = grasp.get_init_states(SLIVER, LINE.center(1))[:2]
    small = expand_neighborhood(SLIVER, 1, cands[0], grasp, LINE, CoverageState(LINE))
    big = expand_neighborhood(SLIVER, 1, cands[1], grasp, LINE, CoverageState(LINE))
    assert small.r < big.r
    best = construct_neighborhood(SLIVER, 1, cands, grasp, LINE, CoverageState(LINE))
    assert best.index == 1
    assert list(best.hood.cells) == [0, 1, 2]


def test_construct_ties_go_to_first(open_world, grasp):
    cands = grasp.get_init_states(open_world, LINE.center(1))
    best = construct_neighborhood(open_world, 1, cands, grasp, LINE, CoverageState(LINE))
    assert best.index == 0


def test_construct_parallel_matches_serial(grasp):
    cands = grasp.get_init_states(SLIVER, LINE.center(1))
    a = construct_neighborhood(SLIVER, 1, cands, grasp, LINE, CoverageState(LINE))
    b = construct_neighborhood(SLIVER, 1, cands, grasp, LINE, CoverageState(LINE), jobs=3)
    assert a.index == b.index and a.hood.r == b.hood.r and a.rollouts == b.rollouts
    assert a.path.to_bytes() == b.path.to_bytes()


def test_construct_rejects_walled_off_home(grasp):
    cands = grasp.get_init_states(SEALED, LINE.center(1))
    assert cands
    out = construct_neighborhood(SEALED, 1, cands, grasp, LINE, CoverageState(LINE))
    assert isinstance(out, Rejected) and out.reason is Infeasibility.NO_PATH


def test_single_cell_isolated_ball(open_world, grasp):
    roi = RegionOfInterest.grid((0.59, 0.09, 0.25), (0.61, 0.11, 0.35), (1, 1, 1))
    cands = grasp.get_init_states(open_world, roi.center(0))[:1]
    best = construct_neighborhood(open_world, 0, cands, grasp, roi, CoverageState(roi))
    assert list(best.hood.cells) == [0]
    assert best.hood.r > 0


# -- whole runs ----------------------------------------------------------------------


def test_zero_cells_empty_library(open_world, grasp):
    lib = preprocess(open_world, RegionOfInterest((), (0.1, 0.1, 0.1)), grasp)
    assert len(lib) == 0 and lib.infeasible == {}


def test_single_cell_one_tuple(open_world, grasp):
    roi = RegionOfInterest.grid((0.59, 0.09, 0.25), (0.61, 0.11, 0.35), (1, 1, 1))
    lib = preprocess(open_world, roi, grasp)
    assert len(lib) == 1 and lib.infeasible == {}
    t = lib.tuples[0]
    assert object_distance(roi.centers[0], t.w_attr.as_array()) <= t.r
    plan = query(open_world, lib, roi.center(0), grasp)
    assert isinstance(plan, FullPlan) and plan.success
    assert execute_plan(open_world, plan, grasp).success


def test_home_sealed_marks_nopath(grasp):
    lib = preprocess(SEALED, LINE, grasp)
    assert len(lib) == 0
    assert set(lib.infeasible) == {0, 1, 2}
    assert all(v in (Infeasibility.NO_PATH, Infeasibility.EMPTY_INIT_SET) for v in lib.infeasible.values())
    assert Infeasibility.NO_PATH in lib.infeasible.values()


def test_straddling_wall_matches_oracle(shelf, grasp):
    lib = preprocess(shelf.world, STRADDLE, grasp)
    verdicts = feasibility_map(shelf.world, grasp, STRADDLE)
    feasible = {c for c, v in verdicts.items() if v.feasible}
    uncovered = set(lib.infeasible)
    assert feasible and uncovered
    assert not feasible & uncovered
    assert feasible | uncovered == set(range(len(STRADDLE)))
    for c in uncovered:
        assert lib.infeasible[c] is verdicts[c].reason
    assert verify_library(shelf.world, lib, grasp).ok


def test_library_invariants(shelf, grasp):
    roi = RegionOfInterest.grid((0.7, -0.1, -0.4), (0.8, 0.1, 0.4), (5, 5, 4))
    lib = preprocess(shelf.world, roi, grasp)
    rep = verify_library(shelf.world, lib, grasp)
    assert rep.ok, rep.problems[:5]
    assert len(lib) <= lib.covered_cells
    if any(np.sum(object_distance(roi.centers, t.w_attr.as_array()) <= t.r) >= 2 for t in lib.tuples):
        assert len(lib) < lib.covered_cells
    home = shelf.world.home_state
    for t in lib.tuples:
        assert np.array_equal(t.tau.start, home) and np.array_equal(t.tau.end, t.s_attr)
        assert grasp.initiation_predicate(shelf.world, t.s_attr, t.w_attr)


def test_preprocess_deterministic_and_parallel_safe(shelf, grasp):
    roi = RegionOfInterest.grid((0.7, -0.1, -0.4), (0.8, 0.1, 0.4), (4, 4, 2))
    a = preprocess(shelf.world, roi, grasp, seed=3).to_bytes()
    b = preprocess(shelf.world, roi, grasp, seed=3).to_bytes()
    c = preprocess(shelf.world, roi, grasp, seed=3, jobs=4).to_bytes()
    assert a == b == c


def test_verify_flags_tampering(shelf, grasp):
    lib = preprocess(shelf.world, STRADDLE, grasp)
    t = lib.tuples[0]
    lib.tuples[0] = AttractorTuple(t.w_attr, t.s_attr, 1.0, t.tau)
    rep = verify_library(shelf.world, lib, grasp)
    assert not rep.ok
    assert any("infeasible cell" in p for p in rep.problems)


