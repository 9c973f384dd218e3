"""Vectorized 2D primitives: SE(2) poses, segment distances, convex polygons."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    r = math.remainder(a, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


def wrap_angles(a: np.ndarray) -> np.ndarray:
    r = np.remainder(a + math.pi, TWO_PI) - math.pi
    return np.where(r <= -math.pi, r + TWO_PI, r)


@dataclass(frozen=True)
class Pose2:
    """Planar rigid pose. ``theta`` is normalized to (-pi, pi] on construction."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @classmethod
    def identity(cls) -> "Pose2":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, a) -> "Pose2":
        return cls(a[0], a[1], a[2])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def compose(self, other: "Pose2") -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(-c * self.x - s * self.y, s * self.x - c * self.y, -self.theta)

    def transform_point(self, p) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]])

    def heading(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta)])

    def __iter__(self):
        return iter((self.x, self.y, self.theta))


def pose_distance(a: Pose2, b: Pose2, angle_weight: float) -> float:
    """Weighted SE(2) metric: Euclidean translation plus weighted wrapped heading."""
    return math.hypot(a.x - b.x, a.y - b.y) + angle_weight * abs(wrap_angle(a.theta - b.theta))


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from points ``p`` to segments ``ab``; all broadcast over leading axes, last axis 2."""
    ab = b - a
    ap = p - a
    denom = np.einsum("...i,...i->...", ab, ab)
    t = np.einsum("...i,...i->...", ap, ab) / np.where(denom > 0.0, denom, 1.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[..., None] * ab
    diff = p - closest
    return np.sqrt(np.einsum("...i,...i->...", diff, diff))


def _orient(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def segment_distance(p: np.ndarray, q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum distance between segments ``pq`` and ``ab`` (broadcasting).

    In the plane two disjoint segments are closest at an endpoint of one of
    them, so the distance is zero on a proper crossing and otherwise the
    smallest of the four endpoint-to-segment distances.
    """
    o1 = _orient(p, q, a)
    o2 = _orient(p, q, b)
    o3 = _orient(a, b, p)
    o4 = _orient(a, b, q)
    crossing = (o1 * o2 < 0.0) & (o3 * o4 < 0.0)
    d = np.minimum(
        np.minimum(point_segment_distance(p, a, b), point_segment_distance(q, a, b)),
        np.minimum(point_segment_distance(a, p, q), point_segment_distance(b, p, q)),
    )
    return np.where(crossing, 0.0, d)


def polygon_signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def is_convex_ccw(vertices: np.ndarray) -> bool:
    """True for a strictly convex polygon with counter-clockwise winding."""
    if len(vertices) < 3:
        return False
    a = vertices
    b = np.roll(vertices, -1, axis=0)
    c = np.roll(vertices, -2, axis=0)
    return bool(np.all(_orient(a, b, c) > 0.0))


class PolygonSet:
    """Flattened edge arrays for a list of convex CCW polygons.

    Edges of all polygons are stacked so capsule queries broadcast over every
    edge at once; ``offsets`` marks where each polygon's edges begin.
    """

    def __init__(self, polygons: list[np.ndarray]):
        self.polygons = [np.asarray(p, dtype=float) for p in polygons]
        starts, ends, offsets = [], [], []
        k = 0
        for poly in self.polygons:
            offsets.append(k)
            starts.append(poly)
            ends.append(np.roll(poly, -1, axis=0))
            k += len(poly)
        if self.polygons:
            self.edge_start = np.concatenate(starts)
            self.edge_end = np.concatenate(ends)
        else:
            self.edge_start = np.zeros((0, 2))
            self.edge_end = np.zeros((0, 2))
        self.offsets = np.array(offsets, dtype=np.intp)

    def __len__(self) -> int:
        return len(self.polygons)

    def capsules_hit(self, p: np.ndarray, q: np.ndarray, radius: float) -> np.ndarray:
        """Which capsules (segment ``pq`` inflated by ``radius``) touch any polygon.

        ``p`` and ``q`` have shape (..., 2); returns a bool array of shape (...).
        """
        if not self.polygons:
            return np.zeros(p.shape[:-1], dtype=bool)
        a = self.edge_start
        b = self.edge_end
        pe = p[..., None, :]
        qe = q[..., None, :]
        d = segment_distance(pe, qe, a, b)
        near = np.any(d <= radius, axis=-1)
        # a capsule entirely inside a polygon crosses no edge; test its start point
        inside_edge = _orient(a, b, pe) >= 0.0
        inside = np.logical_and.reduceat(inside_edge, self.offsets, axis=-1)
        return near | np.any(inside, axis=-1)
