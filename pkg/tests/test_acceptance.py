"""Acceptance criteria, run at full scale. Each test records one PASS/FAIL line for the summary.

Criteria 1, 2, 3, 5 and 6 share a single artifact cache and benchmark run, so the
open-shelf library is built once. Expect the module to take several minutes.
"""

import math

import numpy as np
import pytest

from bctmp import library as libio
from bctmp.bench import Artifacts, BenchConfig, Suite, run_benchmark
from bctmp.geometry import Pose2
from bctmp.oracle import feasibility_map
from bctmp.preprocess import preprocess
from bctmp.query import FullPlan, PROVEN_INFEASIBLE, execute_plan, query, timing_probe
from bctmp.roi import RegionOfInterest
from bctmp.world import fk_batch, jacobian, manipulability_radius

from conftest import ACCEPTANCE, arm
from test_baselines_bench import _tiny_scenario
from test_behaviors import eigen_rmin
from test_world import composed_fk

pytestmark = pytest.mark.slow


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def art_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("artifacts")


@pytest.fixture(scope="module")
def shelf_lib(shelf, art_dir):
    return Artifacts(art_dir).bctmp(shelf, 0)


@pytest.fixture(scope="module")
def bench_run(art_dir, tmp_path_factory, shelf_lib):
    cfg = BenchConfig([Suite("open_shelf", 100), Suite("corner_box", 60)], artifacts=str(art_dir))
    res = run_benchmark(cfg, tmp_path_factory.mktemp("bench"))
    libs = {"open_shelf": shelf_lib,
            "corner_box": libio.load(art_dir / "corner_box-bctmp-0.bctmp")}
    return res, libs


def test_1_oracle_equivalence(shelf, shelf_lib):
    grid = shelf.roi
    assert grid == RegionOfInterest.grid((0.6, -0.2, -math.pi / 4), (0.9, 0.2, math.pi / 4), (25, 25, 8))
    beh = shelf.behavior
    oracle = feasibility_map(shelf.world, beh, grid, seed=0)
    feasible = {c for c, v in oracle.items() if v.feasible}
    covered, uncovered, bad_plans, class_mismatch = set(), set(), [], []
    for c in range(len(grid)):
        out = query(shelf.world, shelf_lib, grid.center(c), beh)
        if isinstance(out, FullPlan):
            covered.add(c)
            if not (out.success and execute_plan(shelf.world, out, beh).success):
                bad_plans.append(c)
        else:
            assert out.kind == PROVEN_INFEASIBLE
            uncovered.add(c)
            if oracle[c].feasible or oracle[c].reason is not out.infeasibility:
                class_mismatch.append(c)
    missed = feasible - covered
    wrongly_uncovered = uncovered & feasible
    beyond = covered - feasible
    ok = not missed and not wrongly_uncovered and not bad_plans and not class_mismatch
    verdict(1, ok, f"{len(grid)} cells, oracle-feasible {len(feasible)}, covered {len(covered)}, "
                   f"uncovered {len(uncovered)}; feasible-but-uncovered {len(missed)}, unverified plans "
                   f"{len(bad_plans)}, class mismatches {len(class_mismatch)}; covered beyond the per-cell "
                   f"oracle {len(beyond)}")


def test_2_end_to_end_success(bench_run):
    res, _ = bench_run
    agg = res.aggregate
    rows = [r for r in res.rows if r.result.planner == "bctmp"]
    counts = {s: agg[s]["bctmp"]["trials"] for s in agg}
    wins = {s: agg[s]["bctmp"]["successes"] for s in agg}
    verified = all(r.result.verified is True for r in rows)
    ok = counts == {"open_shelf": 100, "corner_box": 60} and wins == counts and verified
    verdict(2, ok, f"bctmp successes {wins} of {counts}, execute_plan re-verified on all: {verified}")


def test_3_constant_time_structure(bench_run, shelf, corner):
    res, libs = bench_run
    scen = {"open_shelf": shelf, "corner_box": corner}
    evals, geometry = set(), 0
    for ts in res.trial_sets:
        sc, lib = scen[ts.world_id], libs[ts.world_id]
        for goal, seed in zip(ts.goals, ts.seeds):
            c = query(sc.world, lib, goal, sc.behavior, seed=seed).lookup_counters
            geometry += c.collision_checks + c.plan_calls + c.rollouts
            evals.add((ts.world_id, c.distance_evals - len(lib)))
    ok = geometry == 0 and evals == {(s, 0) for s in libs}
    verdict(3, ok, f"{sum(len(t) for t in res.trial_sets)} queries, geometry calls during lookup {geometry}, "
                   f"distance evals minus |L| per world {sorted(evals)}")


def test_4_submillisecond_lookup(bench_run, shelf, corner):
    _, libs = bench_run
    rng = np.random.default_rng(0)
    parts, ok = [], True
    for name, sc in (("open_shelf", shelf), ("corner_box", corner)):
        lib = libs[name]
        assert len(lib) <= 1000
        centres = sc.roi.centers
        picks = centres[rng.integers(len(centres), size=1000)]
        jitter = rng.uniform(-0.5, 0.5, size=picks.shape) * np.array(sc.roi.resolution)
        stats = timing_probe(lib, [Pose2(*p) for p in picks + jitter])
        ok &= stats["p99"] < 1e-3
        parts.append(f"{name} |L|={len(lib)} p50 {stats['p50'] * 1e6:.1f} us p99 {stats['p99'] * 1e6:.1f} us "
                     f"max {stats['max'] * 1e6:.1f} us")
    verdict(4, ok, "; ".join(parts))


def test_5_memory(bench_run):
    res, libs = bench_run
    mem = {s: {p: v["memory_bytes"] for p, v in by.items()} for s, by in res.aggregate.items()}
    shelf = libio.memory_report(libs["open_shelf"])
    ratio = shelf["covered_cells"] / shelf["tuple_count"]
    ok = all(m["bctmp"] <= m["vctmp"] for m in mem.values()) and ratio >= 5
    verdict(5, ok, "bytes bctmp/vctmp " + ", ".join(f"{s} {m['bctmp']}/{m['vctmp']}" for s, m in mem.items())
            + f"; open_shelf {shelf['covered_cells']} covered cells in {shelf['tuple_count']} tuples "
              f"({ratio:.1f}x)")


def test_6_baseline_dominance(bench_run):
    res, _ = bench_run
    agg = res.aggregate
    corner = agg["corner_box"]
    be = {p: corner[p]["failures_by_stage"]["BehaviorExecution"] for p in corner}
    dominant = all(by["bctmp"]["successes"] >= v["successes"] for by in agg.values() for v in by.values())
    ok = be["online"] >= 1 and be["prm"] >= 1 and be["bctmp"] == 0 and dominant
    succ = {s: {p: v["successes"] for p, v in by.items()} for s, by in agg.items()}
    verdict(6, ok, f"corner_box BehaviorExecution failures {be}; successes {succ}")


def test_7_numerical_kernels(bench_run, corner):
    rng = np.random.default_rng(7)
    w = arm(links=(0.5, 0.4, 0.25))
    qs = rng.uniform(-math.pi, math.pi, size=(1000, 3))
    h = 1e-6
    jac_err = 0.0
    for q in qs:
        fd = np.stack([(fk_batch(w, q + e)[:2] - fk_batch(w, q - e)[:2]) / (2 * h) for e in np.eye(3) * h], axis=1)
        jac_err = max(jac_err, float(np.abs(jacobian(w, q) - fd).max()))
    fk = fk_batch(w, qs)
    ref = np.array([composed_fk(w.links, q) for q in qs])
    d = fk - ref
    d[:, 2] = np.angle(np.exp(1j * d[:, 2]))
    fk_err = float(np.abs(d).max())
    rmin_err = max(abs(manipulability_radius(w, q) - eigen_rmin(w, q)) for q in qs)

    _, libs = bench_run
    lib, beh = libs["corner_box"], corner.behavior
    assert beh.spec.noise_bound == pytest.approx(0.005)
    failures = 0
    for t in lib.tuples:
        for seed in range(100):
            failures += not beh.rollout(corner.world, t.s_attr, t.w_attr, seed=seed).success
    ok = jac_err < 1e-5 and fk_err < 1e-9 and rmin_err < 1e-8 and failures == 0
    verdict(7, ok, f"jacobian {jac_err:.2e}, fk {fk_err:.2e}, r_min {rmin_err:.2e}; insertion rollouts "
                   f"{len(lib) * 100 - failures}/{len(lib) * 100} over {len(lib)} attractors x 100 seeds")


def test_8_determinism(tmp_path, shelf, corner):
    same = {}
    small = {
        "open_shelf": RegionOfInterest.grid((0.7, -0.1, -0.4), (0.85, 0.1, 0.4), (8, 8, 4)),
        "corner_box": RegionOfInterest.grid((0.82, 0.08, -0.35), (0.92, 0.24, 0.35), (5, 8, 4)),
    }
    for name, sc in (("open_shelf", shelf), ("corner_box", corner)):
        blobs = []
        for k in range(2):
            lib = preprocess(sc.world, small[name], sc.behavior, seed=5)
            path = tmp_path / f"{name}{k}.bctmp"
            libio.save(lib, path)
            blobs.append((lib.to_bytes(), path.read_bytes(), path.with_name(path.name + ".json").read_bytes()))
        same[f"preprocess+save {name}"] = blobs[0] == blobs[1]

    _tiny_scenario(tmp_path)
    cfg = {"suites": [{"world": "tiny.json", "trials": 5}], "seed": 2, "timeout_s": 2.0}
    for k in range(2):
        run_benchmark(BenchConfig.from_dict(cfg, tmp_path), tmp_path / f"bench{k}")
    files = sorted(p.relative_to(tmp_path / "bench0") for p in (tmp_path / "bench0").rglob("*")
                   if p.is_file() and "timing" not in p.name and "planning_times" not in p.name)
    same["bench"] = all((tmp_path / "bench0" / f).read_bytes() == (tmp_path / "bench1" / f).read_bytes()
                        for f in files)
    verdict(8, all(same.values()), f"{same}; bench files compared: {len(files)}")
