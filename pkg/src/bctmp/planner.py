"""Bidirectional RRT, probabilistic roadmap, and shortcut smoothing in joint space."""

from __future__ import annotations

import heapq
import json
import math
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import instrument
from .world import EDGE_RESOLUTION, World, edge_collision_free, in_collision, motion_free, sample_states

GOAL_BIAS = 0.1
STEP = 0.2
SHORTCUT_ATTEMPTS = 200


def edge_ok(world: World, a, b, resolution: float | None = None) -> bool:
    """Sampled edge check at ``resolution``, or the continuous certified check when it is ``None``."""
    if resolution is None:
        return motion_free(world, a, b)
    return edge_collision_free(world, a, b, resolution)


class InvalidEndpoint(ValueError):
    """Start or goal state is in collision."""


@dataclass(frozen=True)
class PlannerBudget:
    timeout: float = 5.0
    max_iterations: int = 2000

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


@dataclass
class Path:
    waypoints: np.ndarray

    def __post_init__(self):
        self.waypoints = np.atleast_2d(np.asarray(self.waypoints, dtype=float))

    @property
    def length(self) -> float:
        if len(self.waypoints) < 2:
            return 0.0
        return float(np.sum(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)))

    @property
    def start(self) -> np.ndarray:
        return self.waypoints[0]

    @property
    def end(self) -> np.ndarray:
        return self.waypoints[-1]

    def __len__(self) -> int:
        return len(self.waypoints)

    def is_valid(self, world: World, resolution: float = EDGE_RESOLUTION) -> bool:
        if in_collision(world, self.waypoints[0]):
            return False
        return all(
            edge_collision_free(world, a, b, resolution) for a, b in zip(self.waypoints[:-1], self.waypoints[1:])
        )

    def to_bytes(self) -> bytes:
        m, n = self.waypoints.shape
        return struct.pack("<II", m, n) + self.waypoints.astype("<f8").tobytes()


class _Tree:
    def __init__(self, root: np.ndarray, capacity: int):
        self.nodes = np.empty((capacity + 1, len(root)))
        self.nodes[0] = root
        self.parent = [-1]
        self.size = 1

    def add(self, q: np.ndarray, parent: int) -> int:
        if self.size == len(self.nodes):
            self.nodes = np.concatenate([self.nodes, np.empty_like(self.nodes)])
        self.nodes[self.size] = q
        self.parent.append(parent)
        self.size += 1
        return self.size - 1

    def nearest(self, q: np.ndarray) -> int:
        d = self.nodes[: self.size] - q
        return int(np.argmin(np.einsum("ij,ij->i", d, d)))

    def branch(self, idx: int) -> list[np.ndarray]:
        out = []
        while idx != -1:
            out.append(self.nodes[idx].copy())
            idx = self.parent[idx]
        return out


def _extend(world, tree: _Tree, target: np.ndarray, resolution: float):
    """One RRT step toward ``target``. Returns (node index or None, reached)."""
    near = tree.nearest(target)
    q_near = tree.nodes[near]
    delta = target - q_near
    dist = float(np.linalg.norm(delta))
    if dist <= STEP:
        q_new, reached = target, True
    else:
        q_new, reached = q_near + delta * (STEP / dist), False
    if not edge_ok(world, q_near, q_new, resolution):
        return None, False
    return tree.add(q_new, near), reached


def shortcut(world: World, path: Path, rng: np.random.Generator, attempts: int = SHORTCUT_ATTEMPTS,
             resolution: float | None = None, deadline: float | None = None) -> Path:
    """Random-pair shortcutting; never lengthens the path and keeps every edge checked."""
    pts = [p for p in path.waypoints]
    for _ in range(attempts):
        if len(pts) <= 2 or (deadline is not None and time.perf_counter() > deadline):
            break
        i, j = sorted(int(v) for v in rng.integers(0, len(pts), size=2))
        if j - i < 2:
            continue
        if edge_ok(world, pts[i], pts[j], resolution):
            pts = pts[: i + 1] + pts[j:]
    return Path(np.array(pts))


def _check_endpoints(world: World, start, goal):
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    if in_collision(world, start):
        raise InvalidEndpoint("start state is in collision")
    if in_collision(world, goal):
        raise InvalidEndpoint("goal state is in collision")
    return start, goal


def plan_path(world: World, start, goal, budget: PlannerBudget = PlannerBudget(), seed: int = 0,
              resolution: float | None = None) -> Path | None:
    """Bidirectional RRT with goal bias, then shortcutting.

    Edges are certified continuously unless a sampling ``resolution`` is given.
    Returns ``None`` when the iteration or time budget runs out.
    """
    instrument.bump("plan_calls")
    t0 = time.perf_counter()
    deadline = t0 + budget.timeout
    start, goal = _check_endpoints(world, start, goal)
    if np.array_equal(start, goal):
        return Path(start[None, :])
    if edge_ok(world, start, goal, resolution):
        return Path(np.stack([start, goal]))
    rng = np.random.default_rng(seed)
    trees = [_Tree(start, 256), _Tree(goal, 256)]
    for it in range(budget.max_iterations):
        if time.perf_counter() > deadline:
            return None
        a, b = trees[it % 2], trees[1 - it % 2]
        if rng.random() < GOAL_BIAS:
            target = b.nodes[0]
        else:
            target = sample_states(world, rng, 1)[0]
        new, _ = _extend(world, a, target, resolution)
        if new is None:
            continue
        q_new = a.nodes[new]
        # greedy connect of the other tree toward the new node
        while True:
            idx, reached = _extend(world, b, q_new, resolution)
            if idx is None:
                break
            if reached:
                from_a = a.branch(new)[::-1]
                from_b = b.branch(b.parent[idx])
                pts = from_a + from_b
                if it % 2 == 1:
                    pts = pts[::-1]
                path = shortcut(world, Path(np.array(pts)), rng, resolution=resolution, deadline=deadline)
                return path
    return None


@dataclass
class Roadmap:
    vertices: np.ndarray
    edges: list[tuple[int, int, float]]
    vertex_count: int
    connection_radius: float
    seed: int
    _adj: dict = field(default=None, repr=False, compare=False)

    @property
    def adjacency(self) -> dict[int, list[tuple[int, float]]]:
        if self._adj is None:
            adj: dict[int, list[tuple[int, float]]] = {i: [] for i in range(len(self.vertices))}
            for i, j, w in self.edges:
                adj[i].append((j, w))
                adj[j].append((i, w))
            self._adj = adj
        return self._adj

    def to_bytes(self) -> bytes:
        v, n = self.vertices.shape if len(self.vertices) else (0, 0)
        head = struct.pack("<IIIdq", v, n, len(self.edges), self.connection_radius, self.seed)
        body = self.vertices.astype("<f8").tobytes()
        body += b"".join(struct.pack("<IId", i, j, w) for i, j, w in self.edges)
        return head + body

    @classmethod
    def from_bytes(cls, buf: bytes, offset: int = 0) -> tuple["Roadmap", int]:
        v, n, e, radius, seed = struct.unpack_from("<IIIdq", buf, offset)
        offset += struct.calcsize("<IIIdq")
        verts = np.frombuffer(buf, dtype="<f8", count=v * n, offset=offset).reshape(v, n).astype(float)
        offset += 8 * v * n
        edges = []
        for _ in range(e):
            i, j, w = struct.unpack_from("<IId", buf, offset)
            edges.append((i, j, w))
            offset += 16
        return cls(verts, edges, vertex_count=v, connection_radius=radius, seed=seed), offset

    def to_json(self) -> str:
        return json.dumps(
            {
                "vertex_count": self.vertex_count,
                "connection_radius": self.connection_radius,
                "seed": self.seed,
                "vertices": self.vertices.tolist(),
                "edges": [list(e) for e in self.edges],
            },
            indent=1,
        )


def build_roadmap(world: World, vertex_count: int, connection_radius: float, seed: int = 0,
                  resolution: float | None = None) -> Roadmap:
    if vertex_count <= 0:
        raise ValueError("vertex_count must be positive")
    rng = np.random.default_rng(seed)
    verts: list[np.ndarray] = []
    for _ in range(20 * vertex_count):
        if len(verts) == vertex_count:
            break
        q = sample_states(world, rng, 1)[0]
        if not in_collision(world, q):
            verts.append(q)
    vertices = np.array(verts).reshape(len(verts), world.dof)
    edges = []
    for i in range(len(vertices)):
        d = np.linalg.norm(vertices[i + 1 :] - vertices[i], axis=1)
        for k in np.flatnonzero(d <= connection_radius):
            j = i + 1 + int(k)
            if edge_ok(world, vertices[i], vertices[j], resolution):
                edges.append((i, j, float(d[k])))
    return Roadmap(vertices, edges, vertex_count=vertex_count, connection_radius=connection_radius, seed=seed)


def _connectors(world, roadmap: Roadmap, q: np.ndarray, limit: int, resolution: float) -> list[tuple[int, float]]:
    if not len(roadmap.vertices):
        return []
    d = np.linalg.norm(roadmap.vertices - q, axis=1)
    order = np.argsort(d, kind="stable")
    out = []
    for k in order[:limit]:
        if d[k] > roadmap.connection_radius:
            break
        if edge_ok(world, q, roadmap.vertices[k], resolution):
            out.append((int(k), float(d[k])))
    return out


def plan_on_roadmap(world: World, roadmap: Roadmap, start, goal, budget: PlannerBudget = PlannerBudget(),
                    seed: int = 0, smooth: bool = True, connect_limit: int = 10,
                    resolution: float | None = None) -> Path | None:
    """Hook both endpoints into the roadmap and run uniform-cost search by joint-space length."""
    instrument.bump("plan_calls")
    deadline = time.perf_counter() + budget.timeout
    start, goal = _check_endpoints(world, start, goal)
    if np.array_equal(start, goal):
        return Path(start[None, :])
    v = len(roadmap.vertices)
    s_node, g_node = v, v + 1
    adj = roadmap.adjacency
    extra: dict[int, list[tuple[int, float]]] = {s_node: [], g_node: []}
    for k, w in _connectors(world, roadmap, start, connect_limit, resolution):
        extra[s_node].append((k, w))
    goal_links = _connectors(world, roadmap, goal, connect_limit, resolution)
    goal_of = {k: w for k, w in goal_links}
    direct = float(np.linalg.norm(goal - start))
    if direct <= roadmap.connection_radius and edge_ok(world, start, goal, resolution):
        extra[s_node].append((g_node, direct))

    def neighbors(u):
        if u in extra:
            yield from extra[u]
            return
        yield from adj[u]
        if u in goal_of:
            yield g_node, goal_of[u]

    dist = {s_node: 0.0}
    prev: dict[int, int] = {}
    heap = [(0.0, s_node)]
    done = set()
    while heap:
        if time.perf_counter() > deadline:
            return None
        du, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == g_node:
            break
        for nb, w in neighbors(u):
            nd = du + w
            if nd < dist.get(nb, math.inf):
                dist[nb] = nd
                prev[nb] = u
                heapq.heappush(heap, (nd, nb))
    if g_node not in done:
        return None
    chain = [g_node]
    while chain[-1] != s_node:
        chain.append(prev[chain[-1]])
    pts = []
    for u in reversed(chain):
        pts.append(start if u == s_node else goal if u == g_node else roadmap.vertices[u])
    path = Path(np.array(pts))
    if smooth:
        path = shortcut(world, path, np.random.default_rng(seed), resolution=resolution, deadline=deadline)
    return path
