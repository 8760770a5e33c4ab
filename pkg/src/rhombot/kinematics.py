"""Rhombus module model: edge frames, footprint, relabeling and chain FK.

A module is a rhombus of side 2a with one folding degree of freedom. Its
reference frame sits at the midpoint of edge E0 with the y-axis pointing at
the geometric center. Edges are labeled E0..E3 counterclockwise. The
configuration variable sigma is the interior angle between E0 and E3 (the
angle at the vertex they share); the physical folding angle theta equals
sigma or pi - sigma depending on how the edges have been relabeled, which
the parity flag records.

In the module frame the four vertices are

    A = (-a, 0)                  B = (a, 0)
    C = (a + 2a cos s, 2a sin s) D = (-a + 2a cos s, 2a sin s)

with E0 = AB, E1 = BC, E2 = CD, E3 = DA. Edge frames returned by
`edge_transform` carry the outward normal as their y-axis, which makes them
coincide with the E0 frame of a module docked on that edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .geometry import ConvexPoly, Pose2


class KinematicsError(ValueError):
    pass


@dataclass(frozen=True)
class ModuleParams:
    """Geometric constants of one module (defaults match the prototype)."""

    a: float = 0.140
    theta_min: float = math.radians(45.0)
    theta_max: float = math.radians(135.0)

    def __post_init__(self):
        if not self.a > 0:
            raise KinematicsError(f"half side length must be positive, got {self.a}")
        if not (0.0 < self.theta_min < self.theta_max < math.pi):
            raise KinematicsError(
                f"need 0 < theta_min < theta_max < pi, got "
                f"[{self.theta_min}, {self.theta_max}]"
            )


@dataclass(frozen=True)
class ModuleState:
    """One module's identity, configuration and edge-labeling parity."""

    id: str
    sigma: float
    parity: int = 0  # 0: theta == sigma, 1: theta == pi - sigma
    params: ModuleParams = ModuleParams()

    def __post_init__(self):
        if not (0.0 < self.sigma < math.pi):
            raise KinematicsError(f"sigma must lie in (0, pi), got {self.sigma}")
        object.__setattr__(self, "parity", int(self.parity) & 1)

    @property
    def theta(self) -> float:
        return self.sigma if self.parity == 0 else math.pi - self.sigma

    def with_theta(self, theta: float) -> "ModuleState":
        sigma = theta if self.parity == 0 else math.pi - theta
        return replace(self, sigma=sigma)

    def theta_in_limits(self, slack: float = 1e-9) -> bool:
        p = self.params
        return p.theta_min - slack <= self.theta <= p.theta_max + slack

    def sigma_bounds(self) -> tuple[float, float]:
        """Bounds on sigma implied by the theta limits under current parity."""
        p = self.params
        if self.parity == 0:
            return p.theta_min, p.theta_max
        return math.pi - p.theta_max, math.pi - p.theta_min


def _check_edge(k: int) -> int:
    if k not in (0, 1, 2, 3):
        raise KinematicsError(f"edge index must be in 0..3, got {k}")
    return k


def edge_transform(state: ModuleState, k: int) -> Pose2:
    """Pose of edge k's frame (outward normal as y-axis) in the module frame.

    k = 0 returns the identity so chains compose uniformly.
    """
    _check_edge(k)
    a = state.params.a
    s, c = math.sin(state.sigma), math.cos(state.sigma)
    if k == 0:
        return Pose2.identity()
    if k == 1:
        return Pose2(state.sigma + math.pi, a + a * c, a * s)
    if k == 2:
        return Pose2(0.0, 2 * a * c, 2 * a * s)
    # E3 midpoint is (-a + a cos s, a sin s); the mirrored sign on the x
    # component would collapse E3 onto E1 at sigma = 90 deg and break loop
    # closure against the vertex construction.
    return Pose2(state.sigma, -a + a * c, a * s)


def edge_outward_frame(state: ModuleState, k: int) -> Pose2:
    """Frame at edge k with y pointing out of the module, for docking checks.

    For k >= 1 this is `edge_transform`; E0's transform is the module frame
    itself (inward y), so it gets a half-turn.
    """
    if _check_edge(k) == 0:
        return Pose2(math.pi, 0.0, 0.0)
    return edge_transform(state, k)


def local_vertices(state: ModuleState) -> tuple[tuple[float, float], ...]:
    """Rhombus vertices A, B, C, D in the module frame, counterclockwise."""
    a = state.params.a
    s, c = math.sin(state.sigma), math.cos(state.sigma)
    return (
        (-a, 0.0),
        (a, 0.0),
        (a + 2 * a * c, 2 * a * s),
        (-a + 2 * a * c, 2 * a * s),
    )


def footprint(state: ModuleState, frame: Pose2 = Pose2.identity()) -> ConvexPoly:
    """World-coordinate rhombus footprint of the module."""
    return ConvexPoly(tuple(frame.apply(x, y) for x, y in local_vertices(state)))


def center_transform(state: ModuleState) -> Pose2:
    """Transform from the E0 frame to the module center (identity rotation)."""
    a = state.params.a
    return Pose2(0.0, a * math.cos(state.sigma), a * math.sin(state.sigma))


def relabel_frame(state: ModuleState, new_e0: int) -> Pose2:
    """Pose, in the current module frame, of the frame obtained by making
    edge `new_e0` the reference edge (y-axis toward the module center)."""
    _check_edge(new_e0)
    a = state.params.a
    s, c = math.sin(state.sigma), math.cos(state.sigma)
    if new_e0 == 0:
        return Pose2.identity()
    if new_e0 == 1:
        return Pose2(state.sigma, a + a * c, a * s)
    if new_e0 == 2:
        return Pose2(math.pi, 2 * a * c, 2 * a * s)
    return Pose2(math.pi + state.sigma, -a + a * c, a * s)


def remap_sigma(state: ModuleState, new_e0: int) -> ModuleState:
    """Relabel edges counterclockwise starting from `new_e0`.

    Opposite edges see the same interior angle, adjacent edges the
    supplementary one, so sigma is preserved for E0/E2 and flipped to
    pi - sigma (with a parity flip) for E1/E3. The physical vertex set is
    unchanged up to the rigid motion `relabel_frame`.
    """
    _check_edge(new_e0)
    if new_e0 in (0, 2):
        return state
    return replace(state, sigma=math.pi - state.sigma, parity=state.parity ^ 1)


def forward_kinematics(chain: list[tuple[ModuleState, int]]) -> Pose2:
    """Composed pose of the end frame over a chain of (module, exit edge).

    Each factor maps a module's E0 frame to the chosen edge frame, which is
    where the next module's E0 docks. An empty chain yields the identity.
    """
    pose = Pose2.identity()
    for state, k in chain:
        if k not in (1, 2, 3):
            raise KinematicsError(f"chain interface must be in 1..3, got {k}")
        pose = pose.compose(edge_transform(state, k))
    return pose
