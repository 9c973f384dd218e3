"""Manipulation behaviors: initiation predicate, initiation-state generator, rollout policy.

Two planar behaviors are provided. ``grasp`` approaches a square object along
one of its face normals and closes a parallel gripper across it; it runs open
loop from a single observation. ``insert`` pushes a plug along a port axis
under noisy position estimates, re-observing the port every control step, and
aborts when the arm's manipulability radius drops below the configured floor.

All key poses are tool-centre-point (TCP) poses; see :mod:`bctmp.world`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import instrument
from .geometry import Pose2, wrap_angle
from .world import World, first_blocked_segment, ik_batch, in_collision, manipulability_radius, tool_pose

HALF_PI = 0.5 * math.pi
DLS_DAMPING = 1e-2


class Failure(enum.Enum):
    NONE = "None"
    COLLISION = "Collision"
    PREDICATE_VIOLATED = "PredicateViolated"
    MANIPULABILITY_BREACH = "ManipulabilityBreach"
    CONVERGENCE_TIMEOUT = "ConvergenceTimeout"


@dataclass(frozen=True)
class BehaviorSpec:
    """Behavior parameters. Lengths in meters, angles in radians.

    ``epsilon`` is the manipulability floor as a fraction of arm reach; it only
    gates rollouts when ``manipulability_gate`` is set (the insertion default).
    """

    name: str = "grasp"
    K: int = 5
    retraction: float = 0.10
    epsilon: float = 0.05
    noise_bound: float = 0.0
    object_half_extent: float = 0.025
    approach_samples: int = 16
    bound_scale: float = 1.5
    angle_bound: float = 0.5
    cone_half_angle: float = 0.3
    lateral_tolerance: float = 0.01
    step: float = 0.005
    angle_step: float = 0.05
    max_steps: int = 500
    stall_steps: int = 50
    pos_tol: float = 0.002
    ang_tol: float = 0.02
    ik_seeds: int = 16
    manipulability_gate: bool | None = None

    def __post_init__(self):
        if self.name not in ("grasp", "insert"):
            raise ValueError(f"unknown behavior {self.name!r}")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.retraction <= 0:
            raise ValueError("retraction must be positive")
        if self.noise_bound < 0:
            raise ValueError("noise bound must be non-negative")
        if self.manipulability_gate is None:
            object.__setattr__(self, "manipulability_gate", self.name == "insert")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "BehaviorSpec":
        return cls(**doc)

    def fingerprint(self) -> str:
        from .world import content_hash

        return content_hash(self.to_dict())


@dataclass(frozen=True)
class GraspTarget:
    pose: Pose2
    half_extent: float

    def __post_init__(self):
        if self.half_extent <= 0:
            raise ValueError("half extent must be positive")


@dataclass(frozen=True)
class PerceptionModel:
    """Position noise drawn uniformly from a disk of radius ``noise_bound``.

    The unit-disk sample is drawn first and then scaled, so a smaller bound
    with the same generator state yields a proportionally smaller error.
    """

    noise_bound: float = 0.0

    def __post_init__(self):
        if self.noise_bound < 0:
            raise ValueError("noise bound must be non-negative")

    def observe(self, true_pose: Pose2, rng: np.random.Generator) -> Pose2:
        u, v = rng.random(2)
        rad = self.noise_bound * math.sqrt(u)
        ang = 2.0 * math.pi * v
        return Pose2(true_pose.x + rad * math.cos(ang), true_pose.y + rad * math.sin(ang), true_pose.theta)


@dataclass
class RolloutResult:
    success: bool
    trajectory: np.ndarray
    reason: Failure = Failure.NONE
    final_error: tuple[float, float] = (math.inf, math.inf)
    info: dict = field(default_factory=dict)


def _tcp_and_jacobian(world: World, q) -> tuple[float, float, float, list[list[float]]]:
    """TCP pose and its 3 x n Jacobian for one state, in plain floats (hot loop)."""
    th = world.base.theta
    x, y = world.base.x, world.base.y
    angles = []
    for qi in q:
        th += qi
        angles.append(th)
    cs = [(math.cos(a), math.sin(a)) for a in angles]
    for L, (c, s) in zip(world.links, cs):
        x += L * c
        y += L * s
    d = world.gripper_depth
    cphi, sphi = cs[-1]
    tx, ty = x + d * cphi, y + d * sphi
    n = len(q)
    jx = [0.0] * n
    jy = [0.0] * n
    ax, ay = -d * sphi, d * cphi
    for k in range(n - 1, -1, -1):
        c, s = cs[k]
        L = world.links[k]
        ax -= L * s
        ay += L * c
        jx[k] = ax
        jy[k] = ay
    return tx, ty, angles[-1], [jx, jy, [1.0] * n]


def _rmin_from_jacobian(jx, jy) -> float:
    """Smallest singular value of the 2 x n positional block, closed form."""
    a = sum(v * v for v in jx)
    c = sum(v * v for v in jy)
    b = sum(u * v for u, v in zip(jx, jy))
    half = 0.5 * (a + c)
    disc = math.sqrt(max(0.0, 0.25 * (a - c) ** 2 + b * b))
    return math.sqrt(max(0.0, half - disc))


def _flange_from_tcp(world: World, tcp: np.ndarray) -> np.ndarray:
    """Convert TCP poses (..., 3) into flange poses for IK."""
    d = world.gripper_depth
    out = np.array(tcp, dtype=float, copy=True)
    out[..., 0] -= d * np.cos(out[..., 2])
    out[..., 1] -= d * np.sin(out[..., 2])
    return out


def _nearest_to_home(world: World, sols: list[np.ndarray]) -> np.ndarray | None:
    free = [s for s in sols if not in_collision(world, s)]
    if not free:
        return None
    home = world.home_state
    return min(free, key=lambda s: float(np.linalg.norm(s - home)))


class Behavior:
    """Base class: a behavior spec plus its predicate, generator and policy."""

    def __init__(self, spec: BehaviorSpec):
        self.spec = spec

    @property
    def name(self) -> str:
        return self.spec.name

    def fingerprint(self) -> str:
        return self.spec.fingerprint()

    def perception(self) -> PerceptionModel:
        return PerceptionModel(self.spec.noise_bound)

    def rmin_floor(self, world: World) -> float:
        return self.spec.epsilon * world.reach

    # -- subclass hooks -------------------------------------------------
    def key_heading(self, w: Pose2, heading: float) -> float:
        raise NotImplementedError

    def within_bound(self, tcp: Pose2, w: Pose2) -> bool:
        raise NotImplementedError

    def get_init_states(self, world: World, w: Pose2) -> list[np.ndarray]:
        raise NotImplementedError

    def terminal_ok(self, world: World, tcp: Pose2, w: Pose2) -> bool:
        return True

    def closed_loop(self) -> bool:
        return False

    # -- shared ----------------------------------------------------------
    def terminal_pose(self, w: Pose2, heading: float) -> Pose2:
        return Pose2(w.x, w.y, self.key_heading(w, heading))

    def initiation_predicate(self, world: World, state, w: Pose2) -> bool:
        state = np.asarray(state, dtype=float)
        if in_collision(world, state):
            return False
        return self.within_bound(tool_pose(world, state), w)

    def rollout(self, world: World, start, w_true: Pose2, perception: PerceptionModel | None = None,
                seed: int = 0) -> RolloutResult:
        """Simulate the policy from ``start`` against the true object pose ``w_true``.

        The TCP tracks a reference that advances at most ``step`` meters and
        ``angle_step`` radians per control step toward the terminal key pose,
        with one damped least-squares joint update per step.
        """
        instrument.bump("rollouts")
        spec = self.spec
        perception = perception if perception is not None else self.perception()
        rng = np.random.default_rng(seed)
        q = np.asarray(start, dtype=float).copy()
        traj = [q.copy()]
        if not self.initiation_predicate(world, q, w_true):
            return RolloutResult(False, np.array(traj), Failure.PREDICATE_VIOLATED)

        tx, ty, tphi, jac = _tcp_and_jacobian(world, q)
        heading0 = tphi
        true_goal = self.terminal_pose(w_true, heading0)
        belief = perception.observe(w_true, rng)
        est = np.array([belief.x, belief.y])
        n_obs = 1
        ref = np.array([tx, ty, tphi])
        floor = self.rmin_floor(world)
        gate = spec.manipulability_gate
        lower, upper = world.lower, world.upper
        lam2 = DLS_DAMPING**2
        best = math.inf
        best_step = 0
        reason = Failure.CONVERGENCE_TIMEOUT
        final_err = (math.inf, math.inf)
        for k in range(spec.max_steps + 1):
            pos_err = math.hypot(true_goal.x - tx, true_goal.y - ty)
            ang_err = abs(wrap_angle(true_goal.theta - tphi))
            final_err = (pos_err, ang_err)
            if pos_err <= spec.pos_tol and ang_err <= spec.ang_tol:
                if self.terminal_ok(world, Pose2(tx, ty, tphi), w_true):
                    reason = Failure.NONE
                else:
                    reason = Failure.PREDICATE_VIOLATED
                break
            score = pos_err + 0.1 * ang_err
            if score < best - 1e-7:
                best, best_step = score, k
            elif k - best_step > spec.stall_steps:
                break
            if k == spec.max_steps:
                break
            if self.closed_loop() and k > 0:
                obs = perception.observe(w_true, rng)
                n_obs += 1
                corr = (np.array([obs.x, obs.y]) - est) / n_obs
                cn = float(np.hypot(*corr))
                if spec.noise_bound > 0 and cn > spec.noise_bound:
                    corr *= spec.noise_bound / cn
                est = est + corr
            gx, gy = (est[0], est[1])
            gphi = self.key_heading(Pose2(gx, gy, w_true.theta), heading0)
            dx, dy = gx - ref[0], gy - ref[1]
            dphi = wrap_angle(gphi - ref[2])
            dist = math.hypot(dx, dy)
            m = max(1, math.ceil(dist / spec.step - 1e-9), math.ceil(abs(dphi) / spec.angle_step - 1e-9))
            ref = ref + np.array([dx / m, dy / m, dphi / m])
            e = np.array([ref[0] - tx, ref[1] - ty, wrap_angle(ref[2] - tphi)])
            j = np.array(jac)
            dq = j.T @ np.linalg.solve(j @ j.T + lam2 * np.eye(3), e)
            q = np.clip(q + dq, lower, upper)
            traj.append(q.copy())
            tx, ty, tphi, jac = _tcp_and_jacobian(world, q)
            if gate and _rmin_from_jacobian(*_positional(world, q)) < floor:
                reason = Failure.MANIPULABILITY_BREACH
                break
        traj_arr = np.array(traj)
        # the swept motion between control steps must be clear, not just the sampled states
        blocked = first_blocked_segment(world, traj_arr)
        if blocked >= 0:
            return RolloutResult(False, traj_arr[: blocked + 1], Failure.COLLISION, final_err)
        return RolloutResult(reason is Failure.NONE, traj_arr, reason, final_err)


def _positional(world: World, q) -> tuple[list[float], list[float]]:
    """Columns of the 2 x n flange Jacobian as two float lists."""
    th = world.base.theta
    angles = []
    for qi in q:
        th += qi
        angles.append(th)
    n = len(angles)
    jx = [0.0] * n
    jy = [0.0] * n
    ax = ay = 0.0
    for k in range(n - 1, -1, -1):
        L = world.links[k]
        ax -= L * math.sin(angles[k])
        ay += L * math.cos(angles[k])
        jx[k] = ax
        jy[k] = ay
    return jx, jy


class GraspBehavior(Behavior):
    """Face-normal approach on a square object, open loop."""

    def face_approaches(self, w: Pose2) -> list[float]:
        return [wrap_angle(w.theta + k * HALF_PI) for k in range(4)]

    def key_heading(self, w: Pose2, heading: float) -> float:
        return min(self.face_approaches(w), key=lambda a: abs(wrap_angle(heading - a)))

    def antipodal_score(self, w: Pose2, approach: float) -> float:
        """cos of the angle between the closing axis and the nearest face-normal pair."""
        closing = approach + HALF_PI
        alpha = wrap_angle(closing - w.theta)
        return max(abs(math.cos(alpha)), abs(math.sin(alpha)))

    def pregrasp_pose(self, w: Pose2, approach: float) -> Pose2:
        r = self.spec.retraction
        return Pose2(w.x - r * math.cos(approach), w.y - r * math.sin(approach), approach)

    def within_bound(self, tcp: Pose2, w: Pose2) -> bool:
        spec = self.spec
        psi = self.key_heading(w, tcp.theta)
        if abs(wrap_angle(tcp.theta - psi)) >= spec.angle_bound:
            return False
        pre = self.pregrasp_pose(w, psi)
        return math.hypot(tcp.x - pre.x, tcp.y - pre.y) <= spec.bound_scale * spec.retraction

    def terminal_ok(self, world: World, tcp: Pose2, w: Pose2) -> bool:
        # object width measured along the closing axis must fit between the finger capsules
        alpha = wrap_angle(tcp.theta + HALF_PI - w.theta)
        width = self.spec.object_half_extent * (abs(math.cos(alpha)) + abs(math.sin(alpha)))
        return width <= 0.5 * world.gripper_span - world.clearance

    def candidate_approaches(self, w: Pose2) -> list[float]:
        m = self.spec.approach_samples
        return [wrap_angle(w.theta + 2.0 * math.pi * j / m) for j in range(m)]

    def get_init_states(self, world: World, w: Pose2) -> list[np.ndarray]:
        spec = self.spec
        approaches = self.candidate_approaches(w)
        grasp_tcp = np.array([[w.x, w.y, a] for a in approaches])
        pre_tcp = np.array([self.pregrasp_pose(w, a).as_array() for a in approaches])
        sols = ik_batch(world, _flange_from_tcp(world, np.vstack([grasp_tcp, pre_tcp])), seeds=spec.ik_seeds)
        m = len(approaches)
        valid = [j for j in range(m) if _nearest_to_home(world, sols[j]) is not None]
        ranked = sorted(valid, key=lambda j: -self.antipodal_score(w, approaches[j]))[: spec.K]
        out = []
        for j in ranked:
            q = _nearest_to_home(world, sols[m + j])
            if q is not None and self.initiation_predicate(world, q, w):
                out.append(q)
        return out


class InsertBehavior(Behavior):
    """Plug insertion along the port axis with closed-loop position correction."""

    def closed_loop(self) -> bool:
        return True

    def key_heading(self, w: Pose2, heading: float) -> float:
        return w.theta

    def preinsert_pose(self, w: Pose2) -> Pose2:
        r = self.spec.retraction
        return Pose2(w.x - r * math.cos(w.theta), w.y - r * math.sin(w.theta), w.theta)

    def within_bound(self, tcp: Pose2, w: Pose2) -> bool:
        spec = self.spec
        if abs(wrap_angle(tcp.theta - w.theta)) >= spec.cone_half_angle:
            return False
        c, s = math.cos(w.theta), math.sin(w.theta)
        dx, dy = w.x - tcp.x, w.y - tcp.y
        ahead = dx * c + dy * s
        lateral = abs(-dx * s + dy * c)
        if ahead < -spec.pos_tol or ahead > spec.bound_scale * spec.retraction:
            return False
        return lateral <= spec.lateral_tolerance + max(ahead, 0.0) * math.tan(spec.cone_half_angle)

    def get_init_states(self, world: World, w: Pose2) -> list[np.ndarray]:
        spec = self.spec
        target = _flange_from_tcp(world, self.preinsert_pose(w).as_array())
        sols = ik_batch(world, target, seeds=spec.ik_seeds)[0]
        floor = self.rmin_floor(world)
        home = world.home_state
        out = [
            q
            for q in sols
            if manipulability_radius(world, q) >= floor and self.initiation_predicate(world, q, w)
        ]
        out.sort(key=lambda q: float(np.linalg.norm(q - home)))
        return out[: spec.K]


def make_behavior(spec: BehaviorSpec) -> Behavior:
    return {"grasp": GraspBehavior, "insert": InsertBehavior}[spec.name](spec)


def initiation_predicate(behavior: Behavior, world: World, state, w: Pose2) -> bool:
    return behavior.initiation_predicate(world, state, w)


def get_init_states(behavior: Behavior, world: World, w: Pose2) -> list[np.ndarray]:
    return behavior.get_init_states(world, w)


def rollout(behavior: Behavior, world: World, start, w_true: Pose2, perception: PerceptionModel | None = None,
            seed: int = 0) -> RolloutResult:
    return behavior.rollout(world, start, w_true, perception, seed)


__all__ = [
    "Behavior",
    "BehaviorSpec",
    "Failure",
    "GraspBehavior",
    "GraspTarget",
    "InsertBehavior",
    "PerceptionModel",
    "RolloutResult",
    "get_init_states",
    "initiation_predicate",
    "make_behavior",
    "manipulability_radius",
    "rollout",
]
