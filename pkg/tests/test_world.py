import json
import math

import numpy as np
import pytest

from bctmp import instrument
from bctmp.geometry import Pose2, wrap_angle
from bctmp.world import (
    World,
    WorldError,
    capsule_segments,
    collision_batch,
    collision_batch_reference,
    edge_collision_free,
    first_blocked_segment,
    fk_batch,
    forward_kinematics,
    in_collision,
    inverse_kinematics,
    jacobian,
    load_world,
    motion_free,
    save_world,
    state_slack,
    tool_pose,
)

from conftest import LIMITS3, arm, rect


def composed_fk(links, q, base=(0.0, 0.0, 0.0)):
    """Product of homogeneous transforms: rotate by the joint, then translate along the link."""
    def T(theta, dx):
        c, s = math.cos(theta), math.sin(theta)
        return np.array([[c, -s, c * dx], [s, c, s * dx], [0, 0, 1.0]])

    bx, by, bt = base
    c, s = math.cos(bt), math.sin(bt)
    M = np.array([[c, -s, bx], [s, c, by], [0, 0, 1.0]])
    for L, qi in zip(links, q):
        M = M @ T(qi, L)
    return M[0, 2], M[1, 2], math.atan2(M[1, 0], M[0, 0])


def test_fk_straight_chain():
    w = arm(links=(1, 1, 1))
    p = forward_kinematics(w, [0, 0, 0])
    assert np.allclose(p.as_array(), [3, 0, 0])
    p = forward_kinematics(w, [math.pi / 2, 0, 0])
    assert np.allclose(p.as_array(), [0, 3, math.pi / 2], atol=1e-12)


def test_fk_against_composition():
    w = arm(links=(1.0, 0.8, 0.5))
    x, y, t = composed_fk(w.links, [0.3, -0.4, 1.1])
    p = forward_kinematics(w, [0.3, -0.4, 1.1])
    assert abs(p.x - x) < 1e-9 and abs(p.y - y) < 1e-9 and abs(wrap_angle(p.theta - t)) < 1e-9


def test_fk_with_base_against_composition(rng):
    w = World(links=(0.5, 0.4, 0.25), joint_limits=LIMITS3, base=Pose2(0.2, -0.1, 0.7))
    for q in rng.uniform(-2.5, 2.5, size=(200, 3)):
        x, y, t = composed_fk(w.links, q, (0.2, -0.1, 0.7))
        p = forward_kinematics(w, q)
        assert abs(p.x - x) < 1e-9 and abs(p.y - y) < 1e-9 and abs(wrap_angle(p.theta - t)) < 1e-9


def test_fk_dimension_mismatch():
    w = arm()
    with pytest.raises(WorldError):
        forward_kinematics(w, [0.0, 0.0])
    with pytest.raises(WorldError):
        jacobian(w, [0.0, 0.0, 0.0, 0.0])


def test_tool_pose_offsets_along_heading():
    w = arm()
    q = [0.4, -0.3, 0.2]
    f, t = forward_kinematics(w, q), tool_pose(w, q)
    assert np.allclose([t.x - f.x, t.y - f.y], 0.06 * f.heading())
    assert t.theta == f.theta


def test_jacobian_straight_chain_x_row_zero():
    w = arm(links=(1, 1, 1))
    J = jacobian(w, [0, 0, 0])
    assert J.shape == (2, 3)
    assert np.allclose(J[0], 0.0)
    assert np.allclose(J[1], [3, 2, 1])


def test_jacobian_single_link():
    w = World(links=(0.7,), joint_limits=((-math.pi, math.pi),))
    for th in (0.0, 0.4, -2.0):
        assert np.allclose(jacobian(w, [th])[:, 0], [-0.7 * math.sin(th), 0.7 * math.cos(th)])


def test_jacobian_finite_differences(rng):
    w = arm(links=(1.0, 0.8, 0.5))
    h = 1e-6
    worst = 0.0
    for q in rng.uniform(-math.pi, math.pi, size=(1000, 3)):
        J = jacobian(w, q)
        fd = np.empty((2, 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            fd[:, k] = (fk_batch(w, q + e)[:2] - fk_batch(w, q - e)[:2]) / (2 * h)
        worst = max(worst, float(np.abs(J - fd).max()))
    assert worst < 1e-5


# -- collision ---------------------------------------------------------


def test_empty_world_straight_arm_free():
    w = arm()
    assert not in_collision(w, [0.0, 0.0, 0.0])
    assert not in_collision(w, [1.0, 0.5, -0.5])


def test_obstacle_over_arm_collides():
    w = arm(obstacles=[rect(0.3, -0.1, 2.0, 0.1)], home=(2.0, 0.0, 0.0))
    assert in_collision(w, [0.0, 0.0, 0.0])


def test_self_collision_folded_arm():
    w = arm(links=(0.5, 0.5, 0.5), limits=((-math.pi, math.pi),) * 3)
    # second link folds back onto the first, third comes back out across it
    assert in_collision(w, [0.0, 3.0, 3.0])


def _point_segment(p, a, b):
    ab = b - a
    t = np.clip(np.sum((p - a) * ab, axis=-1) / max(float(ab @ ab), 1e-300), 0.0, 1.0)
    return np.linalg.norm(p - a - t[..., None] * ab, axis=-1)


def sampled_margins(world, qs, samples=1000):
    """Point-sampling oracle: per state, min over capsules of (distance - required gap).

    Each capsule axis is sampled at ``samples`` points and compared against
    obstacle edges (zero inside a polygon) and against the exact axis of every
    non-adjacent capsule. Negative means collision.
    """
    s, e = capsule_segments(world, qs)
    t = np.linspace(0.0, 1.0, samples)[None, None, :, None]
    pts = s[:, :, None, :] + t * (e - s)[:, :, None, :]
    margin = np.full(len(qs), np.inf)
    for poly in world.obstacles:
        poly = np.array(poly)
        inside = np.ones(pts.shape[:-1], dtype=bool)
        dist = np.full(pts.shape[:-1], np.inf)
        for a, b in zip(poly, np.roll(poly, -1, axis=0)):
            dist = np.minimum(dist, _point_segment(pts, a, b))
            ab, ap = b - a, pts - a
            inside &= ab[0] * ap[..., 1] - ab[1] * ap[..., 0] >= 0
        dist[inside] = 0.0
        margin = np.minimum(margin, dist.min(axis=(1, 2)) - world.clearance)
    n = world.dof
    pairs = [(i, j) for i in range(n) for j in range(i + 2, n)] + [(g, i) for g in range(n, n + 3) for i in range(n - 1)]
    for i, j in pairs:
        ab = e[:, j] - s[:, j]
        ap = pts[:, i] - s[:, j, None]
        tt = np.clip(np.sum(ap * ab[:, None], -1) / np.sum(ab * ab, -1)[:, None], 0, 1)
        d = np.linalg.norm(ap - tt[..., None] * ab[:, None], axis=-1).min(axis=1)
        margin = np.minimum(margin, d - 2 * world.clearance)
    return margin


def test_collision_matches_point_sampling_oracle(shelf):
    w = shelf.world
    rng = np.random.default_rng(7)
    qs = rng.uniform(w.lower, w.upper, size=(10_000, 3))
    fast = collision_batch(w, qs)
    # 50 samples overestimate by at most 5.1 mm, so states clear by more than that skip the dense pass
    margin = np.concatenate([sampled_margins(w, c, samples=50) for c in np.array_split(qs, 10)])
    near = np.flatnonzero(margin < 6e-3)
    margin[near] = np.concatenate([sampled_margins(w, c) for c in np.array_split(qs[near], 20)])
    # sampling overestimates distance by at most half a sample spacing (0.25 mm here)
    clear = np.abs(margin) > 1e-3
    assert np.array_equal(fast[clear], margin[clear] < 0)
    assert 0 < fast.sum() < len(qs)
    assert clear.mean() > 0.98


def test_kernel_matches_numpy_reference(shelf, rng):
    w = shelf.world
    qs = rng.uniform(w.lower, w.upper, size=(20_000, 3))
    assert np.array_equal(collision_batch(w, qs), collision_batch_reference(w, qs))


def test_collision_counts_checks(shelf):
    with instrument.measure() as d:
        collision_batch(shelf.world, np.zeros((5, 3)))
    assert d.collision_checks == 5


# -- edges -------------------------------------------------------------


def test_edge_trivial_cases(shelf):
    w = shelf.world
    home = w.home_state
    assert edge_collision_free(w, home, home)
    bad = np.array([0.0, 0.0, 0.0])
    assert in_collision(w, bad)
    assert not edge_collision_free(w, home, bad)
    assert not edge_collision_free(w, bad, home)
    assert not motion_free(w, bad, home)


def test_edge_refinement_oracle():
    # chunky obstacles, no slivers
    w = arm(obstacles=[rect(0.6, 0.3, 1.2, 0.9), rect(-0.9, -0.9, -0.4, -0.3)], home=(0.0, 0.0, 0.0))
    rng = np.random.default_rng(3)
    disagree = 0
    for _ in range(2000):
        a = rng.uniform(w.lower, w.upper)
        b = a + rng.uniform(-0.6, 0.6, size=3)
        b = np.clip(b, w.lower, w.upper)
        if edge_collision_free(w, a, b, 0.02) != edge_collision_free(w, a, b, 0.002):
            disagree += 1
    assert disagree == 0


def test_collision_in_endpoint_blocks_all_edges(shelf, rng):
    w = shelf.world
    bad = np.array([0.0, 0.0, 0.0])
    for b in rng.uniform(w.lower, w.upper, size=(50, 3)):
        assert not edge_collision_free(w, bad, b)
        assert not motion_free(w, bad, b)


def test_certified_edges_imply_fine_sampling(shelf):
    w = shelf.world
    rng = np.random.default_rng(11)
    certified = 0
    for _ in range(400):
        a = rng.uniform(w.lower, w.upper)
        b = np.clip(a + rng.uniform(-0.5, 0.5, size=3), w.lower, w.upper)
        if motion_free(w, a, b):
            certified += 1
            assert edge_collision_free(w, a, b, 0.0005)
    assert certified > 20


def test_state_slack_is_a_free_ball(shelf):
    w = shelf.world
    rng = np.random.default_rng(5)
    for q in rng.uniform(w.lower, w.upper, size=(300, 3)):
        r = state_slack(w, q)
        if in_collision(w, q):
            assert r <= 0
            continue
        assert r > 0
        # any state inside the certified radius is free
        for d in rng.normal(size=(10, 3)):
            p = q + 0.999 * r * d / np.linalg.norm(d)
            assert not in_collision(w, p)


def test_first_blocked_segment(shelf):
    w = shelf.world
    home = w.home_state
    bad = np.array([0.0, 0.0, 0.0])
    assert first_blocked_segment(w, np.stack([home, home])) == -1
    assert first_blocked_segment(w, np.stack([home, home, bad])) == 1


# -- IK ----------------------------------------------------------------


def test_ik_unreachable_empty():
    w = arm()
    assert inverse_kinematics(w, Pose2(2.0, 0.0, 0.0)) == []


def test_ik_round_trip(rng):
    w = arm()
    hits = 0
    for q in rng.uniform(-2.5, 2.5, size=(60, 3)):
        target = forward_kinematics(w, q)
        sols = inverse_kinematics(w, target, seeds=16)
        hits += bool(sols)
        for s in sols:
            p = forward_kinematics(w, s)
            assert math.hypot(p.x - target.x, p.y - target.y) < 1e-4
            assert abs(wrap_angle(p.theta - target.theta)) < 1e-4
            assert np.all(s >= w.lower) and np.all(s <= w.upper)
    assert hits >= 55


def test_ik_generic_target_and_dedup():
    w = arm()
    sols = inverse_kinematics(w, Pose2(0.6, 0.3, 0.2), seeds=16)
    assert sols
    for i in range(len(sols)):
        for j in range(i):
            assert np.linalg.norm(sols[i] - sols[j]) >= 1e-3


def test_ik_deterministic():
    w = arm()
    a = inverse_kinematics(w, Pose2(0.5, -0.2, 1.0))
    b = inverse_kinematics(w, Pose2(0.5, -0.2, 1.0))
    assert len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


# -- world file --------------------------------------------------------


def test_world_round_trip(tmp_path, shelf):
    p = tmp_path / "w.json"
    save_world(shelf.world, p)
    doc = json.loads(p.read_text())
    assert doc["format"] == "bctmp-world-v1"
    w2 = load_world(p)
    assert w2.fingerprint() == shelf.world.fingerprint()


def test_fingerprint_tracks_obstacles(shelf):
    w = shelf.world
    moved = w.with_obstacles([rect(0.96, -0.30, 1.01, 0.30)] + list(w.obstacles[1:]))
    assert moved.fingerprint() != w.fingerprint()


@pytest.mark.parametrize(
    "kw",
    [
        dict(links=(0.5, -0.1), joint_limits=((-1, 1), (-1, 1))),
        dict(links=(0.5,), joint_limits=((-1, 1), (-1, 1))),
        dict(links=(0.5,), joint_limits=((1, -1),)),
        dict(links=(0.5,), joint_limits=((-1, 1),), home=(2.0,)),
        dict(links=(0.5,), joint_limits=((-1, 1),), obstacles=(rect(0, 0, 1, 1)[::-1],)),
        dict(links=(0.5,), joint_limits=((-1, 1),), obstacles=(rect(0.2, -0.1, 0.3, 0.1),)),
    ],
)
def test_world_validation(kw):
    with pytest.raises(WorldError):
        World(**kw)
