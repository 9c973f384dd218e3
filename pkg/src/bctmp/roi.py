"""Object-pose region of interest discretized on a shared (x, y, theta) lattice."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, wrap_angles

log = logging.getLogger(__name__)

DEFAULT_ANGLE_WEIGHT = 0.3


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box {lo} .. {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, p) -> np.ndarray:
        p = np.asarray(p)
        return np.all((p >= np.array(self.lo)) & (p < np.array(self.hi)), axis=-1)


def object_distance(a, b, angle_weight: float = DEFAULT_ANGLE_WEIGHT) -> np.ndarray:
    """Weighted SE(2) distance between pose arrays (..., 3)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.hypot(a[..., 0] - b[..., 0], a[..., 1] - b[..., 1]) + angle_weight * np.abs(
        wrap_angles(a[..., 2] - b[..., 2])
    )


@dataclass(frozen=True)
class RegionOfInterest:
    """Disjoint local regions sharing one lattice of spacing ``resolution``.

    The lattice is anchored at the componentwise minimum corner of all boxes.
    A cell belongs to the first box that contains its centre. Cells are
    ordered by (region, i, j, k), which defines "lowest index".
    """

    boxes: tuple[Box, ...]
    resolution: tuple[float, float, float]
    _cells: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        boxes = tuple(b if isinstance(b, Box) else Box(*b) for b in self.boxes)
        res = tuple(float(v) for v in self.resolution)
        if len(res) != 3 or any(v <= 0 for v in res):
            raise ValueError("resolution must be positive on every axis")
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "resolution", res)
        self._build()

    def _build(self):
        res = np.array(self.resolution)
        if not self.boxes:
            origin = np.zeros(3)
            idx = np.zeros((0, 3), dtype=np.int64)
            region = np.zeros(0, dtype=np.int64)
        else:
            origin = np.min([b.lo for b in self.boxes], axis=0)
            found: dict[tuple[int, int, int], int] = {}
            for r, box in enumerate(self.boxes):
                first = np.floor((np.array(box.lo) - origin) / res + 1e-9).astype(int) - 1
                last = np.ceil((np.array(box.hi) - origin) / res - 1e-9).astype(int) + 1
                grids = np.meshgrid(*[np.arange(a, b) for a, b in zip(first, last)], indexing="ij")
                cand = np.stack([g.ravel() for g in grids], axis=-1)
                centers = origin + (cand + 0.5) * res
                for c in cand[box.contains(centers)]:
                    found.setdefault(tuple(int(v) for v in c), r)
            keys = sorted(found, key=lambda c: (found[c], c))
            idx = np.array(keys, dtype=np.int64).reshape(-1, 3)
            region = np.array([found[k] for k in keys], dtype=np.int64)
        self._cells["origin"] = origin
        self._cells["index"] = idx
        self._cells["region"] = region
        self._cells["centers"] = origin + (idx + 0.5) * res
        self._cells["lookup"] = {tuple(int(v) for v in c): i for i, c in enumerate(idx)}

    @classmethod
    def grid(cls, lo, hi, counts) -> "RegionOfInterest":
        """A single box split into ``counts`` cells per axis."""
        res = tuple((b - a) / n for a, b, n in zip(lo, hi, counts))
        return cls((Box(tuple(lo), tuple(hi)),), res)

    def __len__(self) -> int:
        return len(self._cells["index"])

    @property
    def n_regions(self) -> int:
        return len(self.boxes)

    @property
    def centers(self) -> np.ndarray:
        return self._cells["centers"]

    @property
    def cell_index(self) -> np.ndarray:
        return self._cells["index"]

    @property
    def cell_region(self) -> np.ndarray:
        return self._cells["region"]

    def center(self, cell: int) -> Pose2:
        return Pose2.from_array(self.centers[cell])

    def cells_of(self, region: int) -> np.ndarray:
        return np.flatnonzero(self.cell_region == region)

    def cell_of_index(self, ijk) -> int | None:
        return self._cells["lookup"].get(tuple(int(v) for v in ijk))

    def locate(self, pose) -> int | None:
        """Cell whose lattice box contains ``pose``, if that cell is in the RoI."""
        p = np.asarray(pose.as_array() if isinstance(pose, Pose2) else pose, dtype=float)
        ijk = np.floor((p - self._cells["origin"]) / np.array(self.resolution)).astype(int)
        return self.cell_of_index(ijk)

    def contains(self, pose) -> bool:
        p = np.asarray(pose.as_array() if isinstance(pose, Pose2) else pose, dtype=float)
        return any(bool(b.contains(p)) for b in self.boxes)

    def neighbors(self, cell: int) -> list[int]:
        base = self.cell_index[cell]
        lookup = self._cells["lookup"]
        out = []
        for axis in range(3):
            for step in (-1, 1):
                key = [int(v) for v in base]
                key[axis] += step
                nb = lookup.get(tuple(key))
                if nb is not None:
                    out.append(nb)
        return out

    def check_resolution(self, pos_tol: float, ang_tol: float) -> bool:
        """Warn when cells are coarser than twice the behavior's convergence tolerance."""
        dx, dy, dth = self.resolution
        ok = dx <= 2 * pos_tol and dy <= 2 * pos_tol and dth <= 2 * ang_tol
        if not ok:
            log.warning(
                "RoI resolution %s is coarser than 2x the rollout tolerance (%.4g m, %.4g rad); "
                "coverage is certified at cell centres only",
                self.resolution, pos_tol, ang_tol,
            )
        return ok

    def to_dict(self) -> dict:
        return {
            "boxes": [{"lo": list(b.lo), "hi": list(b.hi)} for b in self.boxes],
            "resolution": list(self.resolution),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RegionOfInterest":
        if "counts" in doc:
            return cls.grid(doc["lo"], doc["hi"], doc["counts"])
        return cls(tuple(Box(tuple(b["lo"]), tuple(b["hi"])) for b in doc["boxes"]), tuple(doc["resolution"]))
