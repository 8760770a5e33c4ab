import math

import numpy as np
import pytest

from rhombot.actuation import (
    ActuationError,
    ActuationParams,
    StrokeCounter,
    actuation_torque,
    cable_length,
    can_disconnect_single_sided,
    disconnect_threshold,
    hysteresis_angle_deg,
    resisting_torque,
    stroke_counts,
)

deg = math.radians
A = 0.14
P = ActuationParams()


class TestTorques:
    def test_drive_torque_at_90(self):
        # (4.5 kg*cm * 12 / (0.005 m * 24)) * 0.28 * sin(45 deg)
        assert actuation_torque(P, A, deg(90)) == pytest.approx(8.74, abs=0.01)

    def test_drive_torque_vanishes_at_zero(self):
        assert actuation_torque(P, A, 1e-12) == pytest.approx(0.0, abs=1e-10)

    def test_drive_torque_monotone(self):
        thetas = np.linspace(0.01, math.pi - 0.01, 500)
        values = [actuation_torque(P, A, t) for t in thetas]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_resisting_torque_default(self):
        # 25 N * (0.28 - 0.07) m + 0.84 kg*cm
        assert resisting_torque(P, A) == pytest.approx(5.332, abs=1e-3)

    def test_resisting_torque_zero_terms(self):
        p = ActuationParams(Fe=0.0, eps=0.0)
        assert resisting_torque(p, A) == 0.0

    def test_resisting_torque_boundary_b_equals_2a(self):
        p = ActuationParams(b=2 * A)
        assert resisting_torque(p, A) == pytest.approx(p.eps)

    def test_resisting_torque_invalid_geometry(self):
        p = ActuationParams(b=0.3)
        with pytest.raises(ActuationError):
            resisting_torque(p, A)

    def test_homogeneous_in_scale(self):
        for scale in (0.5, 2.0, 3.7):
            assert actuation_torque(P, scale * A, deg(77)) == pytest.approx(
                scale * actuation_torque(P, A, deg(77))
            )
            pf = ActuationParams(Fe=P.Fe * scale, eps=P.eps * scale, b=P.b)
            got = resisting_torque(pf, A)
            want = scale * resisting_torque(ActuationParams(b=P.b), A)
            assert got == pytest.approx(want)


class TestSingleSidedDisconnect:
    def test_feasible_at_90(self):
        assert can_disconnect_single_sided(P, A, deg(90))

    def test_infeasible_at_45(self):
        assert not can_disconnect_single_sided(P, A, deg(45))

    def test_threshold_by_bisection(self):
        theta_star = disconnect_threshold(P, A)
        assert math.degrees(theta_star) == pytest.approx(51.1, abs=0.2)

    def test_threshold_matches_grid_scan(self):
        theta_star = disconnect_threshold(P, A)
        grid = np.linspace(deg(1), deg(179), 10_000)
        flips = [
            t
            for t, u in zip(grid, grid[1:])
            if can_disconnect_single_sided(P, A, u)
            and not can_disconnect_single_sided(P, A, t)
        ]
        assert len(flips) == 1
        assert abs(theta_star - flips[0]) < deg(179) / 10_000 * 1.01

    def test_monotone_in_theta(self):
        grid = np.linspace(deg(1), deg(179), 400)
        flags = [can_disconnect_single_sided(P, A, t) for t in grid]
        assert flags == sorted(flags)

    def test_never_feasible_returns_none(self):
        p = ActuationParams(Fe=1e6)
        assert disconnect_threshold(p, A) is None


class TestCable:
    def test_default_profile_at_90(self):
        assert cable_length(A, deg(90)) == pytest.approx(0.396, abs=5e-4)

    def test_monotone_decreasing(self):
        assert cable_length(A, deg(135)) < cable_length(A, deg(45))

    def test_custom_profile(self):
        assert cable_length(A, deg(70), profile=lambda t: 0.123) == 0.123

    def test_routing_constant(self):
        assert cable_length(A, deg(90), L0=0.1) == pytest.approx(
            0.1 + cable_length(A, deg(90))
        )


class TestServoStroke:
    def test_hysteresis_angle(self):
        assert hysteresis_angle_deg(P) == pytest.approx(131.87, abs=0.05)

    def test_zero_stroke(self):
        counter = StrokeCounter(P, A)
        assert counter.stroke(deg(90), deg(90)) == 0.0

    def test_round_trip_differs_by_hysteresis(self):
        counter = StrokeCounter(P, A)
        fwd = counter.stroke(deg(90), deg(120))
        rev = counter.stroke(deg(120), deg(90))
        assert rev - fwd == pytest.approx(P.hysteresis_counts)

    def test_no_hysteresis_on_first_stroke(self):
        counter = StrokeCounter(P, A)
        assert counter.stroke(deg(90), deg(120)) == pytest.approx(
            stroke_counts(P, A, deg(90), deg(120))
        )

    def test_additive_same_direction(self):
        counter = StrokeCounter(P, A)
        total = counter.stroke(deg(60), deg(80)) + counter.stroke(deg(80), deg(110))
        direct = StrokeCounter(P, A).stroke(deg(60), deg(110))
        assert total == pytest.approx(direct)

    def test_hysteresis_once_per_reversal(self):
        counter = StrokeCounter(P, A)
        counter.stroke(deg(90), deg(100))
        with_flip = counter.stroke(deg(100), deg(95))
        keep_going = counter.stroke(deg(95), deg(90))
        base_flip = stroke_counts(P, A, deg(100), deg(95))
        base_keep = stroke_counts(P, A, deg(95), deg(90))
        assert with_flip == pytest.approx(base_flip + P.hysteresis_counts)
        assert keep_going == pytest.approx(base_keep)


class TestValidation:
    def test_bad_params(self):
        with pytest.raises(ActuationError):
            ActuationParams(T=-1)
        with pytest.raises(ActuationError):
            ActuationParams(Z1=0)
        with pytest.raises(ActuationError):
            ActuationParams(Z2=2.5)

    def test_theta_domain(self):
        with pytest.raises(ActuationError):
            actuation_torque(P, A, 0.0)
        with pytest.raises(ActuationError):
            actuation_torque(P, A, math.pi)
