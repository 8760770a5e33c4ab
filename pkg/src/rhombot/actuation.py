"""Drive and connector physics: torques, cable length, servo stroke.

Everything is SI internally (N*m, m, rad); the catalog values quoted in
kg*cm convert at the boundary. The torque ratio Z1/Z2 is applied exactly as
the drive equation states it, with both tooth counts as parameters, so
either gearing convention is expressible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

KG_CM_TO_NM = 0.0980665


class ActuationError(ValueError):
    pass


@dataclass(frozen=True)
class ActuationParams:
    """Physical constants of the drive and connectors (prototype defaults)."""

    T: float = 4.5 * KG_CM_TO_NM  # servo output torque, N*m
    Z1: int = 12  # output gear teeth
    Z2: int = 24  # input gear teeth
    r: float = 0.005  # winch radius, m
    Fe: float = 25.0  # electromagnet holding force, N
    b: float = 0.070  # electromagnet mount position, m
    eps: float = 0.84 * KG_CM_TO_NM  # contact friction torque, N*m
    encoder_resolution: int = 4095  # counts per revolution
    hysteresis_counts: float = 1500.0

    def __post_init__(self):
        for name in ("T", "r", "Fe", "b", "eps"):
            if getattr(self, name) < 0 or (name in ("T", "r", "b") and getattr(self, name) == 0):
                raise ActuationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.Z1 <= 0 or self.Z2 <= 0 or int(self.Z1) != self.Z1 or int(self.Z2) != self.Z2:
            raise ActuationError("gear tooth counts must be positive integers")
        if self.encoder_resolution <= 0:
            raise ActuationError("encoder resolution must be positive")


def _check_theta(theta: float):
    if not (0.0 < theta < math.pi):
        raise ActuationError(f"theta must lie in (0, pi), got {theta}")


def actuation_torque(p: ActuationParams, a: float, theta: float) -> float:
    """Torque the drive develops between adjacent edges at folding angle theta."""
    _check_theta(theta)
    return (p.T * p.Z1) / (p.r * p.Z2) * 2.0 * a * math.sin(theta / 2.0)


def resisting_torque(p: ActuationParams, a: float) -> float:
    """Torque the mating connector plus contact friction oppose with."""
    if p.b > 2.0 * a:
        raise ActuationError(
            f"electromagnet position b={p.b} exceeds the side length {2 * a}"
        )
    return p.Fe * (2.0 * a - p.b) + p.eps


def can_disconnect_single_sided(p: ActuationParams, a: float, theta: float) -> bool:
    """True when the drive can peel the module off a still-holding mate."""
    return actuation_torque(p, a, theta) > resisting_torque(p, a)


def disconnect_threshold(
    p: ActuationParams, a: float, tol: float = 1e-12
) -> float | None:
    """Folding angle where the drive torque first beats the resisting torque,
    by bisection; None if it never does below pi."""
    mf = resisting_torque(p, a)
    lo, hi = 1e-12, math.pi - 1e-12
    if actuation_torque(p, a, hi) <= mf:
        return None
    if actuation_torque(p, a, lo) > mf:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if actuation_torque(p, a, mid) > mf:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def cable_length(
    a: float,
    theta: float,
    L0: float = 0.0,
    profile: Callable[[float], float] | None = None,
) -> float:
    """Deployed cable length at folding angle theta.

    The default profile spans the folding diagonal, L0 + 4a cos(theta/2),
    monotone decreasing in theta; pass `profile` to substitute a measured
    curve.
    """
    _check_theta(theta)
    if profile is not None:
        return profile(theta)
    return L0 + 4.0 * a * math.cos(theta / 2.0)


def stroke_counts(
    p: ActuationParams,
    a: float,
    theta_from: float,
    theta_to: float,
    L0: float = 0.0,
    profile: Callable[[float], float] | None = None,
) -> float:
    """Encoder counts for one monotone stroke, hysteresis excluded."""
    dl = abs(
        cable_length(a, theta_to, L0, profile) - cable_length(a, theta_from, L0, profile)
    )
    return dl / p.r * (p.Z1 / p.Z2) / (2.0 * math.pi) * p.encoder_resolution


def hysteresis_angle_deg(p: ActuationParams) -> float:
    """Servo-angle equivalent of the hysteresis offset."""
    return p.hysteresis_counts / p.encoder_resolution * 360.0


class StrokeCounter:
    """Stateful servo-stroke model: adds the hysteresis offset once whenever
    the motion direction reverses relative to the previous stroke."""

    def __init__(
        self,
        p: ActuationParams,
        a: float,
        L0: float = 0.0,
        profile: Callable[[float], float] | None = None,
    ):
        self.p = p
        self.a = a
        self.L0 = L0
        self.profile = profile
        self._last_direction = 0  # +1 increasing theta, -1 decreasing, 0 none yet

    def stroke(self, theta_from: float, theta_to: float) -> float:
        """Encoder counts to move between folding angles, incl. hysteresis."""
        _check_theta(theta_from)
        _check_theta(theta_to)
        if theta_to == theta_from:
            return 0.0
        direction = 1 if theta_to > theta_from else -1
        counts = stroke_counts(
            self.p, self.a, theta_from, theta_to, self.L0, self.profile
        )
        if self._last_direction != 0 and direction != self._last_direction:
            counts += self.p.hysteresis_counts
        self._last_direction = direction
        return counts
