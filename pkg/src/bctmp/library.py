"""Plan library: attractor tuples, the infeasible-cell record, and the containment lookup.

Binary layout (little endian)::

    header   magic "BCTMPLIB1", kind u8, dof u16, angle weight f64,
             resolution 3 x f64, world digest 32 B, behavior digest 32 B, seed u64,
             n_boxes u32, n_tuples u32, n_infeasible u32, roadmap bytes u64,
             body crc32 u32
    boxes    n_boxes x (lo 3 x f64, hi 3 x f64)
    tuples   pose 3 x f64, state dof x f64, r f64, m u32, waypoints m x dof x f64
    cells    n_infeasible x (i, j, k i32, class u8)
    roadmap  optional, see :class:`bctmp.planner.Roadmap`
"""

from __future__ import annotations

import enum
import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from . import instrument
from .geometry import Pose2
from .planner import Path, Roadmap
from .roi import DEFAULT_ANGLE_WEIGHT, Box, RegionOfInterest, object_distance

MAGIC_PREFIX = b"BCTMPLIB"
FORMAT_VERSION = 1
MAGIC = MAGIC_PREFIX + str(FORMAT_VERSION).encode()
_HEADER = struct.Struct("<9sBHd3d32s32sQIIIQI")
HEADER_SIZE = _HEADER.size
BOX_SIZE = 48
INFEASIBLE_SIZE = 13


class LibraryError(Exception):
    pass


class VersionMismatch(LibraryError):
    pass


class FingerprintMismatch(LibraryError):
    pass


class CorruptFile(LibraryError):
    pass


class LibraryKind(enum.IntEnum):
    BCTMP = 0
    VANILLA = 1
    ROADMAP = 2


class Infeasibility(enum.IntEnum):
    EMPTY_INIT_SET = 1
    NO_PATH = 2
    ROLLOUT_FAILED = 3

    @property
    def label(self) -> str:
        return {1: "EmptyInitSet", 2: "NoPath", 3: "RolloutFailed"}[int(self)]


@dataclass
class AttractorTuple:
    w_attr: Pose2
    s_attr: np.ndarray
    r: float
    tau: Path

    def __post_init__(self):
        self.s_attr = np.asarray(self.s_attr, dtype=float)

    def tuple_bytes(self) -> int:
        n = len(self.s_attr)
        return 24 + 8 * n + 8 + 4 + 8 * n * len(self.tau)


@dataclass
class PlanLibrary:
    roi: RegionOfInterest
    tuples: list[AttractorTuple] = field(default_factory=list)
    infeasible: dict[int, Infeasibility] = field(default_factory=dict)
    angle_weight: float = DEFAULT_ANGLE_WEIGHT
    world_fingerprint: str = "0" * 64
    behavior_fingerprint: str = "0" * 64
    dof: int = 0
    kind: LibraryKind = LibraryKind.BCTMP
    seed: int = 0
    roadmap: Roadmap | None = None
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.tuples)

    @property
    def covered_cells(self) -> int:
        return len(self.roi) - len(self.infeasible)

    def _arrays(self):
        if self._index.get("n") != len(self.tuples):
            poses = np.array([t.w_attr.as_array() for t in self.tuples]).reshape(-1, 3)
            radii = np.array([t.r for t in self.tuples])
            self._index.update(n=len(self.tuples), poses=poses, radii=radii)
        return self._index["poses"], self._index["radii"]

    def infeasible_class(self, cell: int | None) -> Infeasibility | None:
        return None if cell is None else self.infeasible.get(cell)

    # -- serialization ---------------------------------------------------
    def to_bytes(self) -> bytes:
        body = bytearray()
        for b in self.roi.boxes:
            body += struct.pack("<6d", *b.lo, *b.hi)
        n = self.dof
        for t in self.tuples:
            body += struct.pack("<3d", *t.w_attr.as_array())
            body += t.s_attr.astype("<f8").tobytes()
            body += struct.pack("<dI", t.r, len(t.tau))
            body += t.tau.waypoints.astype("<f8").reshape(-1, n).tobytes()
        idx = self.roi.cell_index
        for cell in sorted(self.infeasible):
            body += struct.pack("<3iB", *(int(v) for v in idx[cell]), int(self.infeasible[cell]))
        road = self.roadmap.to_bytes() if self.roadmap is not None else b""
        body += road
        header = _HEADER.pack(
            MAGIC, int(self.kind), n, self.angle_weight, *self.roi.resolution,
            bytes.fromhex(self.world_fingerprint), bytes.fromhex(self.behavior_fingerprint), self.seed,
            len(self.roi.boxes), len(self.tuples), len(self.infeasible), len(road), zlib.crc32(bytes(body)),
        )
        return header + bytes(body)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "PlanLibrary":
        if len(buf) < len(MAGIC):
            raise CorruptFile("file shorter than the format tag")
        if not buf.startswith(MAGIC_PREFIX):
            raise CorruptFile("not a plan library")
        if buf[: len(MAGIC)] != MAGIC:
            raise VersionMismatch(f"library format {buf[:len(MAGIC)]!r}, expected {MAGIC!r}")
        try:
            (_, kind, n, aw, rx, ry, rth, wfp, bfp, seed, n_boxes, n_tuples, n_inf, n_road, crc) = _HEADER.unpack_from(buf, 0)
            body = buf[HEADER_SIZE:]
            if zlib.crc32(body) != crc:
                raise CorruptFile("body checksum mismatch")
            off = HEADER_SIZE
            boxes = []
            for _ in range(n_boxes):
                v = struct.unpack_from("<6d", buf, off)
                off += BOX_SIZE
                boxes.append(Box(v[:3], v[3:]))
            roi = RegionOfInterest(tuple(boxes), (rx, ry, rth))
            tuples = []
            for _ in range(n_tuples):
                pose = Pose2(*struct.unpack_from("<3d", buf, off))
                off += 24
                state = np.frombuffer(buf, "<f8", n, off).astype(float)
                off += 8 * n
                r, m = struct.unpack_from("<dI", buf, off)
                off += 12
                wps = np.frombuffer(buf, "<f8", m * n, off).astype(float).reshape(m, n)
                off += 8 * m * n
                tuples.append(AttractorTuple(pose, state, r, Path(wps)))
            infeasible = {}
            for _ in range(n_inf):
                i, j, k, c = struct.unpack_from("<3iB", buf, off)
                off += INFEASIBLE_SIZE
                cell = roi.cell_of_index((i, j, k))
                if cell is None:
                    raise CorruptFile(f"infeasible cell {(i, j, k)} outside the region of interest")
                infeasible[cell] = Infeasibility(c)
            roadmap = None
            if n_road:
                roadmap, end = Roadmap.from_bytes(buf, off)
                if end != off + n_road:
                    raise CorruptFile("roadmap section length mismatch")
                off = end
            if off != len(buf):
                raise CorruptFile(f"{len(buf) - off} trailing bytes")
            return cls(
                roi=roi, tuples=tuples, infeasible=infeasible, angle_weight=aw,
                world_fingerprint=wfp.hex(), behavior_fingerprint=bfp.hex(), dof=n,
                kind=LibraryKind(kind), seed=seed, roadmap=roadmap,
            )
        except (struct.error, ValueError) as exc:
            raise CorruptFile(str(exc)) from exc

    def to_json(self) -> str:
        doc = {
            "format": MAGIC.decode(),
            "kind": self.kind.name.lower(),
            "dof": self.dof,
            "angle_weight": self.angle_weight,
            "world_fingerprint": self.world_fingerprint,
            "behavior_fingerprint": self.behavior_fingerprint,
            "seed": self.seed,
            "roi": self.roi.to_dict(),
            "covered_cells": self.covered_cells,
            "tuples": [
                {
                    "w_attr": list(t.w_attr.as_array()),
                    "s_attr": t.s_attr.tolist(),
                    "r": t.r,
                    "path": t.tau.waypoints.tolist(),
                }
                for t in self.tuples
            ],
            "infeasible": [
                {"cell": [int(v) for v in self.roi.cell_index[c]], "class": self.infeasible[c].label}
                for c in sorted(self.infeasible)
            ],
            "roadmap": None if self.roadmap is None else {
                "vertices": len(self.roadmap.vertices), "edges": len(self.roadmap.edges),
            },
        }
        return json.dumps(doc, indent=1) + "\n"


def expected_size(library: PlanLibrary) -> int:
    """Serialized size from the layout alone."""
    size = HEADER_SIZE + BOX_SIZE * len(library.roi.boxes)
    size += sum(t.tuple_bytes() for t in library.tuples)
    size += INFEASIBLE_SIZE * len(library.infeasible)
    if library.roadmap is not None:
        size += len(library.roadmap.to_bytes())
    return size


def save(library: PlanLibrary, destination, sidecar: bool = True) -> int:
    data = library.to_bytes()
    dest = FsPath(destination)
    tmp = dest.with_name(dest.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, dest)
    if sidecar:
        dest.with_name(dest.name + ".json").write_text(library.to_json())
    return len(data)


def _check_fingerprints(library: PlanLibrary, world=None, behavior=None) -> None:
    if world is not None and world.fingerprint() != library.world_fingerprint:
        raise FingerprintMismatch("world changed since preprocessing; rebuild the library")
    if behavior is not None and behavior.fingerprint() != library.behavior_fingerprint:
        raise FingerprintMismatch("behavior parameters changed since preprocessing; rebuild the library")
    if world is not None and library.dof and world.dof != library.dof:
        raise FingerprintMismatch("library dof does not match the world")


def load(source, world=None, behavior=None) -> PlanLibrary:
    """Parse a library file and check it against ``world`` and ``behavior`` when given."""
    library = PlanLibrary.from_bytes(FsPath(source).read_bytes())
    _check_fingerprints(library, world, behavior)
    return library


def find_containing_tuple(library: PlanLibrary, w_g) -> tuple[int, AttractorTuple] | None:
    """Nearest attractor whose ball contains ``w_g``; ``None`` when no ball does.

    One metric evaluation per tuple, nothing else.
    """
    poses, radii = library._arrays()
    instrument.bump("distance_evals", len(radii))
    if not len(radii):
        return None
    g = w_g.as_array() if isinstance(w_g, Pose2) else np.asarray(w_g, dtype=float)
    d = object_distance(poses, g, library.angle_weight)
    inside = d <= radii
    if not inside.any():
        return None
    k = int(np.argmin(np.where(inside, d, np.inf)))
    return k, library.tuples[k]


def memory_report(library: PlanLibrary) -> dict:
    size = len(library.to_bytes())
    covered = library.covered_cells if library.tuples else 0
    return {
        "tuple_count": len(library.tuples),
        "total_waypoints": int(sum(len(t.tau) for t in library.tuples)),
        "serialized_bytes": size,
        "covered_cells": covered,
        "bytes_per_covered_cell": size / covered if covered else 0.0,
    }
