"""Planar n-link arm world: kinematics, capsule collision checking, IK, world files.

The arm's end-effector pose (what :func:`forward_kinematics` returns) is the
flange at the tip of the last link. A parallel gripper hangs off the flange:
a palm bar of width ``span`` and two fingers of length ``depth``. The tool
centre point (TCP) sits between the fingertips, ``depth`` ahead of the flange.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels, instrument
from .geometry import PolygonSet, Pose2, is_convex_ccw, segment_distance

WORLD_FORMAT = "bctmp-world-v1"

IK_DAMPING = 1e-2
IK_MAX_ITERS = 200
IK_TOL = 1e-4
IK_DEDUP = 1e-3
IK_MAX_STEP = 0.3
EDGE_RESOLUTION = 0.02
MIN_SLACK = 1e-5


class WorldError(ValueError):
    pass


@dataclass(frozen=True)
class World:
    links: tuple[float, ...]
    joint_limits: tuple[tuple[float, float], ...]
    base: Pose2 = Pose2(0.0, 0.0, 0.0)
    clearance: float = 0.02
    obstacles: tuple[tuple[tuple[float, float], ...], ...] = ()
    gripper_span: float = 0.10
    gripper_depth: float = 0.06
    home: tuple[float, ...] = ()
    rng_seed: int = 0
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        links = tuple(float(v) for v in self.links)
        if not links or any(v <= 0.0 for v in links):
            raise WorldError("link lengths must be strictly positive")
        limits = tuple((float(lo), float(hi)) for lo, hi in self.joint_limits)
        if len(limits) != len(links):
            raise WorldError("one joint limit interval per link required")
        if any(lo >= hi for lo, hi in limits):
            raise WorldError("joint limit intervals must be non-empty")
        home = tuple(float(v) for v in self.home) if self.home else tuple(0.0 for _ in links)
        if len(home) != len(links):
            raise WorldError("home joint vector has wrong dimension")
        polys = []
        for poly in self.obstacles:
            verts = np.asarray(poly, dtype=float)
            if verts.ndim != 2 or verts.shape[1] != 2 or not is_convex_ccw(verts):
                raise WorldError("obstacles must be convex polygons in counter-clockwise order")
            polys.append(tuple(tuple(map(float, v)) for v in verts))
        object.__setattr__(self, "links", links)
        object.__setattr__(self, "joint_limits", limits)
        object.__setattr__(self, "home", home)
        object.__setattr__(self, "obstacles", tuple(polys))
        self._cache["links"] = np.array(links)
        self._cache["lo"] = np.array([lo for lo, _ in limits])
        self._cache["hi"] = np.array([hi for _, hi in limits])
        self._cache["polys"] = PolygonSet([np.array(p) for p in polys])
        n = len(links)
        pairs = [(i, j) for i in range(n) for j in range(i + 2, n)]
        # palm and fingers ride on the last link, so they may hit every other link
        pairs += [(g, i) for g in range(n, n + 3) for i in range(n - 1)]
        self._cache["self_pairs"] = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        self._cache["base"] = np.array([self.base.x, self.base.y, self.base.theta])
        ps = self._cache["polys"]
        # bound on point speed per radian: distance from each joint to the farthest point it carries
        tip = math.hypot(self.gripper_depth, 0.5 * self.gripper_span)
        arms = np.array([sum(links[k:]) + tip for k in range(n)])
        self._cache["lipschitz"] = float(np.linalg.norm(arms))
        self._cache["kernel_args"] = (
            self._cache["links"], self._cache["base"], float(self.gripper_span), float(self.gripper_depth),
            float(self.clearance), np.ascontiguousarray(ps.edge_start), np.ascontiguousarray(ps.edge_end),
            ps.offsets.astype(np.int64), self._cache["self_pairs"],
        )
        if any(not (lo <= h <= hi) for h, (lo, hi) in zip(home, limits)):
            raise WorldError("home state violates joint limits")
        if in_collision(self, self.home_state):
            raise WorldError("home state is in collision")

    @property
    def dof(self) -> int:
        return len(self.links)

    @property
    def reach(self) -> float:
        return float(sum(self.links))

    @property
    def lower(self) -> np.ndarray:
        return self._cache["lo"]

    @property
    def upper(self) -> np.ndarray:
        return self._cache["hi"]

    @property
    def home_state(self) -> np.ndarray:
        return np.array(self.home)

    @property
    def polygon_set(self) -> PolygonSet:
        return self._cache["polys"]

    def with_obstacles(self, obstacles) -> "World":
        return World(
            links=self.links,
            joint_limits=self.joint_limits,
            base=self.base,
            clearance=self.clearance,
            obstacles=tuple(obstacles),
            gripper_span=self.gripper_span,
            gripper_depth=self.gripper_depth,
            home=self.home,
            rng_seed=self.rng_seed,
        )

    def to_dict(self) -> dict:
        return {
            "format": WORLD_FORMAT,
            "arm": {
                "links": list(self.links),
                "joint_limits": [list(lim) for lim in self.joint_limits],
                "base": [self.base.x, self.base.y, self.base.theta],
                "clearance": self.clearance,
            },
            "obstacles": [[list(v) for v in poly] for poly in self.obstacles],
            "gripper": {"span": self.gripper_span, "depth": self.gripper_depth},
            "home_joints": list(self.home),
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "World":
        if doc.get("format") != WORLD_FORMAT:
            raise WorldError(f"unsupported world format {doc.get('format')!r}")
        arm = doc["arm"]
        n = len(arm["links"])
        limits = arm.get("joint_limits") or [[-math.pi, math.pi]] * n
        gripper = doc.get("gripper", {})
        return cls(
            links=tuple(arm["links"]),
            joint_limits=tuple(tuple(lim) for lim in limits),
            base=Pose2(*arm.get("base", (0.0, 0.0, 0.0))),
            clearance=float(arm.get("clearance", 0.02)),
            obstacles=tuple(tuple(tuple(v) for v in poly) for poly in doc.get("obstacles", [])),
            gripper_span=float(gripper.get("span", 0.10)),
            gripper_depth=float(gripper.get("depth", 0.06)),
            home=tuple(doc.get("home_joints", [0.0] * n)),
            rng_seed=int(doc.get("rng_seed", 0)),
        )

    def fingerprint(self) -> str:
        if "fingerprint" not in self._cache:
            self._cache["fingerprint"] = content_hash(self.to_dict())
        return self._cache["fingerprint"]


def content_hash(doc) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def load_world(path) -> World:
    return World.from_dict(json.loads(Path(path).read_text()))


def save_world(world: World, path) -> None:
    Path(path).write_text(json.dumps(world.to_dict(), indent=2) + "\n")


def _as_states(world: World, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != world.dof:
        raise WorldError(f"state dimension {q.shape[-1]} does not match arm with {world.dof} joints")
    return q


def _chain(world: World, q: np.ndarray):
    """Absolute link angles (..., n) and joint positions (..., n+1, 2)."""
    angles = world.base.theta + np.cumsum(q, axis=-1)
    steps = world._cache["links"][:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    origin = np.broadcast_to(np.array([world.base.x, world.base.y]), q.shape[:-1] + (1, 2))
    points = np.concatenate([origin, origin + np.cumsum(steps, axis=-2)], axis=-2)
    return angles, points


def forward_kinematics(world: World, state) -> Pose2:
    q = _as_states(world, state)
    if q.ndim != 1:
        raise WorldError("forward_kinematics expects a single state")
    angles, points = _chain(world, q)
    return Pose2(points[-1, 0], points[-1, 1], angles[-1])


def fk_batch(world: World, q) -> np.ndarray:
    """Flange poses (..., 3) with unwrapped heading."""
    q = _as_states(world, q)
    angles, points = _chain(world, q)
    return np.concatenate([points[..., -1, :], angles[..., -1:]], axis=-1)


def tool_batch(world: World, q) -> np.ndarray:
    """TCP poses (..., 3): flange advanced by the gripper depth along the heading."""
    f = fk_batch(world, q)
    d = world.gripper_depth
    return np.stack([f[..., 0] + d * np.cos(f[..., 2]), f[..., 1] + d * np.sin(f[..., 2]), f[..., 2]], axis=-1)


def tool_pose(world: World, state) -> Pose2:
    return Pose2.from_array(tool_batch(world, np.asarray(state, dtype=float)))


def jacobian_batch(world: World, q) -> np.ndarray:
    """Positional flange Jacobians of shape (..., 2, n)."""
    q = _as_states(world, q)
    angles = world.base.theta + np.cumsum(q, axis=-1)
    links = world._cache["links"]
    dx = -links * np.sin(angles)
    dy = links * np.cos(angles)
    # column k collects every link at or beyond joint k
    jx = np.flip(np.cumsum(np.flip(dx, -1), axis=-1), -1)
    jy = np.flip(np.cumsum(np.flip(dy, -1), axis=-1), -1)
    return np.stack([jx, jy], axis=-2)


def jacobian(world: World, state) -> np.ndarray:
    q = _as_states(world, state)
    if q.ndim != 1:
        raise WorldError("jacobian expects a single state")
    return jacobian_batch(world, q)


def pose_jacobian_batch(world: World, q, tool: bool = False) -> np.ndarray:
    """(..., 3, n) Jacobian of (x, y, heading) of the flange or TCP."""
    jp = jacobian_batch(world, q)
    if tool:
        phi = world.base.theta + np.sum(q, axis=-1)
        d = world.gripper_depth
        jp = jp + np.stack([-d * np.sin(phi), d * np.cos(phi)], axis=-1)[..., :, None]
    ones = np.ones(jp.shape[:-2] + (1, jp.shape[-1]))
    return np.concatenate([jp, ones], axis=-2)


def manipulability_radius(world: World, state) -> float:
    """Smallest singular value of the positional Jacobian."""
    s = np.linalg.svd(jacobian(world, state), compute_uv=False)
    return float(s[-1])


def manipulability_batch(world: World, q) -> np.ndarray:
    return np.linalg.svd(jacobian_batch(world, q), compute_uv=False)[..., -1]


def capsule_segments(world: World, q: np.ndarray):
    """Start and end points (B, S, 2) of every capsule: links, then palm and fingers."""
    angles, points = _chain(world, q)
    flange = points[..., -1, :]
    phi = angles[..., -1]
    u = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    nrm = np.stack([-np.sin(phi), np.cos(phi)], axis=-1)
    half = 0.5 * world.gripper_span * nrm
    depth = world.gripper_depth * u
    left, right = flange + half, flange - half
    starts = np.concatenate([points[..., :-1, :], np.stack([left, left, right], axis=-2)], axis=-2)
    ends = np.concatenate([points[..., 1:, :], np.stack([right, left + depth, right + depth], axis=-2)], axis=-2)
    return starts, ends


def collision_batch(world: World, q) -> np.ndarray:
    """Boolean collision flags for an (B, n) batch of states."""
    q = np.ascontiguousarray(np.atleast_2d(_as_states(world, q)), dtype=float)
    instrument.bump("collision_checks", len(q))
    return _kernels.collide_states(q, *world._cache["kernel_args"])


def collision_batch_reference(world: World, q) -> np.ndarray:
    """Pure-numpy twin of :func:`collision_batch`, kept for cross-checking the kernel."""
    q = np.atleast_2d(_as_states(world, q))
    starts, ends = capsule_segments(world, q)
    hit = world.polygon_set.capsules_hit(starts, ends, world.clearance).any(axis=-1)
    pairs = world._cache["self_pairs"]
    if len(pairs):
        d = segment_distance(starts[:, pairs[:, 0]], ends[:, pairs[:, 0]], starts[:, pairs[:, 1]], ends[:, pairs[:, 1]])
        hit |= np.any(d < 2.0 * world.clearance, axis=-1)
    return hit


def in_collision(world: World, state) -> bool:
    q = _as_states(world, state)
    return bool(collision_batch(world, q[None, :])[0])


def within_limits(world: World, q) -> np.ndarray:
    q = np.asarray(q)
    return np.all((q >= world.lower - 1e-12) & (q <= world.upper + 1e-12), axis=-1)


def interpolate(a: np.ndarray, b: np.ndarray, resolution: float) -> np.ndarray:
    """States from ``a`` to ``b`` (inclusive) with joint-space steps no longer than ``resolution``."""
    steps = max(1, int(math.ceil(float(np.linalg.norm(b - a)) / resolution)))
    t = np.linspace(0.0, 1.0, steps + 1)[:, None]
    return a + t * (b - a)


def edge_collision_free(world: World, a, b, resolution: float = EDGE_RESOLUTION) -> bool:
    """True iff every state on the joint-space segment, at steps of at most ``resolution``, is free."""
    a = np.ascontiguousarray(_as_states(world, a), dtype=float)
    b = np.ascontiguousarray(_as_states(world, b), dtype=float)
    hit_at = _kernels.edge_hits(a, b, float(resolution), *world._cache["kernel_args"])
    if hit_at < 0:
        instrument.bump("collision_checks", max(1, int(math.ceil(float(np.linalg.norm(b - a)) / resolution))) + 1)
        return True
    instrument.bump("collision_checks", int(hit_at))
    return False


def motion_free(world: World, a, b) -> bool:
    """Continuous check: True only if every state on the segment from ``a`` to ``b`` is free.

    Uses conservative advancement on the clearance slack, so the answer holds
    at any sampling resolution.
    """
    a = np.ascontiguousarray(_as_states(world, a), dtype=float)
    b = np.ascontiguousarray(_as_states(world, b), dtype=float)
    # sampled pass first: colliding edges are rejected quickly without the slow approach to contact
    hit_at = _kernels.edge_hits(a, b, EDGE_RESOLUTION, *world._cache["kernel_args"])
    if hit_at >= 0:
        instrument.bump("collision_checks", int(hit_at))
        return False
    free, evals = _kernels.edge_certified(a, b, MIN_SLACK, world._cache["lipschitz"], *world._cache["kernel_args"])
    sampled = max(1, int(math.ceil(float(np.linalg.norm(b - a)) / EDGE_RESOLUTION))) + 1
    instrument.bump("collision_checks", sampled + int(evals))
    return bool(free)


def first_blocked_segment(world: World, states) -> int:
    """Index of the first segment of a state sequence that fails the continuous check, or -1."""
    q = np.ascontiguousarray(np.atleast_2d(_as_states(world, states)), dtype=float)
    idx, evals = _kernels.polyline_certified(q, MIN_SLACK, world._cache["lipschitz"], *world._cache["kernel_args"])
    instrument.bump("collision_checks", int(evals))
    return int(idx)


def state_slack(world: World, state) -> float:
    """Joint-space radius around ``state`` guaranteed collision-free (<= 0 when it collides)."""
    q = np.ascontiguousarray(_as_states(world, state), dtype=float)
    segs = np.empty((world.dof + 3, 4))
    instrument.bump("collision_checks")
    return float(_kernels.state_slack(q, *world._cache["kernel_args"], segs, world._cache["lipschitz"]))


def sample_states(world: World, rng: np.random.Generator, count: int) -> np.ndarray:
    return rng.uniform(world.lower, world.upper, size=(count, world.dof))


def ik_batch(world: World, targets, seeds: int = 8, tool: bool = False) -> list[list[np.ndarray]]:
    """Damped least-squares IK for a stack of (x, y, heading) targets.

    Every target is started from the home state plus ``seeds`` random states
    drawn from the world's RNG seed, so the result is a pure function of the
    world and the targets. Solutions are returned per target in start order
    with near-duplicates removed.
    """
    targets = np.ascontiguousarray(np.atleast_2d(np.asarray(targets, dtype=float)))
    rng = np.random.default_rng(world.rng_seed)
    starts = np.ascontiguousarray(np.vstack([world.home_state, sample_states(world, rng, seeds)]))
    c = world._cache
    q, res = _kernels.ik_solve(
        starts, targets, c["links"], c["base"], world.gripper_depth if tool else 0.0,
        world.lower, world.upper, IK_DAMPING, IK_MAX_ITERS, IK_MAX_STEP,
    )
    ok = (res[:, 0] < IK_TOL) & (res[:, 1] < IK_TOL)
    n_s = len(starts)
    out: list[list[np.ndarray]] = []
    for t in range(len(targets)):
        sols: list[np.ndarray] = []
        for k in range(t * n_s, (t + 1) * n_s):
            if ok[k] and all(np.linalg.norm(q[k] - s) >= IK_DEDUP for s in sols):
                sols.append(q[k].copy())
        out.append(sols)
    return out


def inverse_kinematics(world: World, target: Pose2, seeds: int = 8) -> list[np.ndarray]:
    """Joint solutions placing the flange at ``target``; empty when unreachable."""
    return ik_batch(world, target.as_array(), seeds=seeds)[0]
