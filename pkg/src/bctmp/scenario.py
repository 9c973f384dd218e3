"""Scenario files: a world plus the behavior, RoI and baseline settings that go with it."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .behaviors import Behavior, BehaviorSpec, make_behavior
from .roi import DEFAULT_ANGLE_WEIGHT, RegionOfInterest
from .world import World


@dataclass(frozen=True)
class VanillaConfig:
    """Hand-authored TCP box the vanilla library is built over, and the snap tolerance used online."""

    region: RegionOfInterest
    snap_tolerance: float = 0.03

    @classmethod
    def from_dict(cls, doc: dict) -> "VanillaConfig":
        return cls(RegionOfInterest.from_dict(doc["region"]), float(doc.get("snap_tolerance", 0.03)))


@dataclass(frozen=True)
class RoadmapConfig:
    vertices: int = 600
    connection_radius: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class Scenario:
    name: str
    world: World
    behavior_spec: BehaviorSpec
    roi: RegionOfInterest
    angle_weight: float = DEFAULT_ANGLE_WEIGHT
    vanilla: VanillaConfig | None = None
    roadmap: RoadmapConfig = field(default_factory=RoadmapConfig)
    source: str = ""

    @property
    def behavior(self) -> Behavior:
        return make_behavior(self.behavior_spec)


def scenario_from_dict(doc: dict, name: str = "", source: str = "") -> Scenario:
    world = World.from_dict(doc)
    spec = BehaviorSpec.from_dict(doc.get("behavior", {"name": "grasp"}))
    if "roi" not in doc:
        raise ValueError("scenario has no 'roi' section")
    base = doc.get("baselines", {})
    vanilla = VanillaConfig.from_dict(base["vanilla"]) if "vanilla" in base else None
    roadmap = RoadmapConfig(**base.get("prm", {}))
    return Scenario(
        name=name or doc.get("name", ""),
        world=world,
        behavior_spec=spec,
        roi=RegionOfInterest.from_dict(doc["roi"]),
        angle_weight=float(doc.get("angle_weight", DEFAULT_ANGLE_WEIGHT)),
        vanilla=vanilla,
        roadmap=roadmap,
        source=source,
    )


def builtin_path(name: str) -> Path:
    return Path(str(resources.files("bctmp") / "data" / f"{name}.json"))


def load_scenario(path_or_name) -> Scenario:
    """Load a scenario file, or one of the bundled scenarios by name (``open_shelf``, ``corner_box``)."""
    p = Path(path_or_name)
    if not p.exists() and p.suffix == "":
        p = builtin_path(str(path_or_name))
    doc = json.loads(p.read_text())
    return scenario_from_dict(doc, name=doc.get("name", p.stem), source=str(p))
