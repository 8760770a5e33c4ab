"""Rhombot: planar modular self-reconfigurable robot simulator and planner."""

from .geometry import ConvexPoly, Pose2, compose, invert, poly_overlap, wrap_angle
from .kinematics import (
    ModuleParams,
    ModuleState,
    center_transform,
    edge_outward_frame,
    edge_transform,
    footprint,
    forward_kinematics,
    relabel_frame,
    remap_sigma,
)
from .loops import LoopSpec, LoopSolveResult, loop_residual, solve_loop

__all__ = [
    "ConvexPoly",
    "Pose2",
    "compose",
    "invert",
    "poly_overlap",
    "wrap_angle",
    "ModuleParams",
    "ModuleState",
    "center_transform",
    "edge_outward_frame",
    "edge_transform",
    "footprint",
    "forward_kinematics",
    "relabel_frame",
    "remap_sigma",
    "LoopSpec",
    "LoopSolveResult",
    "loop_residual",
    "solve_loop",
]

__version__ = "0.1.0"
