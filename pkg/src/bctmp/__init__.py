"""Behavior-aware constant-time motion planning for a planar arm."""

from .behaviors import BehaviorSpec, Failure, GraspBehavior, InsertBehavior, PerceptionModel, make_behavior
from .geometry import Pose2
from .library import (
    AttractorTuple,
    CorruptFile,
    FingerprintMismatch,
    PlanLibrary,
    VersionMismatch,
    find_containing_tuple,
    load,
    memory_report,
    save,
)
from .planner import Path, PlannerBudget, build_roadmap, plan_on_roadmap, plan_path
from .preprocess import preprocess, verify_library
from .query import FullPlan, QueryFailure, execute_plan, query, timing_probe
from .roi import Box, RegionOfInterest
from .scenario import Scenario, load_scenario
from .world import World, forward_kinematics, in_collision, inverse_kinematics, jacobian, manipulability_radius

__version__ = "0.1.0"

__all__ = [
    "AttractorTuple",
    "BehaviorSpec",
    "Box",
    "CorruptFile",
    "Failure",
    "FingerprintMismatch",
    "FullPlan",
    "GraspBehavior",
    "InsertBehavior",
    "Path",
    "PerceptionModel",
    "PlanLibrary",
    "PlannerBudget",
    "Pose2",
    "QueryFailure",
    "RegionOfInterest",
    "Scenario",
    "VersionMismatch",
    "World",
    "build_roadmap",
    "execute_plan",
    "find_containing_tuple",
    "forward_kinematics",
    "in_collision",
    "inverse_kinematics",
    "jacobian",
    "load",
    "load_scenario",
    "make_behavior",
    "manipulability_radius",
    "memory_report",
    "plan_on_roadmap",
    "plan_path",
    "preprocess",
    "query",
    "save",
    "timing_probe",
    "verify_library",
]
