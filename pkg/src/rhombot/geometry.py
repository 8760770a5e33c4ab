"""Planar rigid-body transforms and convex-polygon geometry.

Angles are radians everywhere inside the library; degrees appear only at
I/O boundaries. Yaw is kept normalized to (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

TAU = 2.0 * math.pi

# Module scale is ~0.28 m, so 1e-9 m is far below physical meaning.
COLLINEAR_TOL = 1e-9


class DegeneratePolygonError(ValueError):
    """Polygon has (near-)zero area or is not strictly convex CCW."""


def wrap_angle(angle: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    w = math.remainder(angle, TAU)
    if w <= -math.pi:
        w += TAU
    return w


@dataclass(frozen=True)
class Pose2:
    """A planar rigid transform: rotation by `yaw` followed by translation."""

    yaw: float
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @staticmethod
    def identity() -> "Pose2":
        return Pose2(0.0, 0.0, 0.0)

    def compose(self, other: "Pose2") -> "Pose2":
        """Return the transform equivalent to applying `other` in this frame."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return Pose2(
            self.yaw + other.yaw,
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
        )

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return Pose2(-self.yaw, -(c * self.x + s * self.y), -(-s * self.x + c * self.y))

    def apply(self, px: float, py: float) -> tuple[float, float]:
        """Map a point from this frame into the parent frame."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return (self.x + c * px - s * py, self.y + s * px + c * py)

    def is_identity(self, tol: float = 1e-12) -> bool:
        return abs(self.yaw) <= tol and abs(self.x) <= tol and abs(self.y) <= tol


def compose(a: Pose2, b: Pose2) -> Pose2:
    return a.compose(b)


def invert(p: Pose2) -> Pose2:
    return p.inverse()


def pose_delta_norms(a: Pose2, b: Pose2) -> tuple[float, float]:
    """(translation distance, absolute yaw difference) between two poses."""
    d = a.inverse().compose(b)
    return math.hypot(d.x, d.y), abs(d.yaw)


@dataclass(frozen=True)
class ConvexPoly:
    """A strictly convex polygon, vertices counterclockwise, in meters."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        n = len(verts)
        if n < 3:
            raise DegeneratePolygonError(f"polygon needs >= 3 vertices, got {n}")
        if signed_area(verts) <= COLLINEAR_TOL:
            raise DegeneratePolygonError("polygon area is not positive (CCW required)")
        for i in range(n):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % n]
            cx, cy = verts[(i + 2) % n]
            cross = (bx - ax) * (cy - by) - (by - ay) * (cx - bx)
            if cross < -COLLINEAR_TOL:
                raise DegeneratePolygonError("polygon is not convex/CCW")

    def translated(self, dx: float, dy: float) -> "ConvexPoly":
        return ConvexPoly(tuple((x + dx, y + dy) for x, y in self.vertices))

    def transformed(self, pose: Pose2) -> "ConvexPoly":
        return ConvexPoly(tuple(pose.apply(x, y) for x, y in self.vertices))

    def support_width(self, dx: float, dy: float) -> float:
        """Extent of the polygon along the (normalized) direction (dx, dy)."""
        n = math.hypot(dx, dy)
        ux, uy = dx / n, dy / n
        dots = [ux * x + uy * y for x, y in self.vertices]
        return max(dots) - min(dots)


def signed_area(vertices: Sequence[tuple[float, float]]) -> float:
    s = 0.0
    n = len(vertices)
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def _axes(poly: ConvexPoly) -> Iterable[tuple[float, float]]:
    verts = poly.vertices
    n = len(verts)
    for i in range(n):
        ex = verts[(i + 1) % n][0] - verts[i][0]
        ey = verts[(i + 1) % n][1] - verts[i][1]
        ln = math.hypot(ex, ey)
        if ln <= COLLINEAR_TOL:
            continue
        yield (-ey / ln, ex / ln)


def _projection(poly: ConvexPoly, ax: float, ay: float) -> tuple[float, float]:
    dots = [ax * x + ay * y for x, y in poly.vertices]
    return min(dots), max(dots)


def poly_overlap(a: ConvexPoly, b: ConvexPoly, clearance: float = 0.0) -> bool:
    """Separating-axis overlap test with a penetration allowance.

    True iff the interiors of `a` and `b`, each eroded by clearance/2,
    intersect. At clearance 0, polygons that merely touch (shared edge or
    vertex) do not overlap.
    """
    if signed_area(a.vertices) <= COLLINEAR_TOL or signed_area(b.vertices) <= COLLINEAR_TOL:
        raise DegeneratePolygonError("overlap test on degenerate polygon")
    # the collinearity tolerance also absorbs FP noise on shared edges, so
    # exact touching never reads as penetration
    for ax, ay in list(_axes(a)) + list(_axes(b)):
        amin, amax = _projection(a, ax, ay)
        bmin, bmax = _projection(b, ax, ay)
        separation = max(bmin - amax, amin - bmax)
        if separation >= -clearance - COLLINEAR_TOL:
            return False
    return True
