import math

import numpy as np
import pytest

from rhombot.kinematics import KinematicsError, ModuleParams, ModuleState
from rhombot.loops import (
    LoopSpec,
    damped_least_squares,
    loop_residual,
    residual_for,
    solve_loop,
)

deg = math.radians


def sq_states(**sigmas_deg):
    return {
        mid: ModuleState(mid, deg(v)) for mid, v in sigmas_deg.items()
    }


def square_loop_spec(states=None) -> LoopSpec:
    """The 2x2 parallel block: long branch M0-(E2)->M1-(E1)->M2-(E1)->M3
    center, short branch M0-(E1)->M3' center; the long branch enters M3 at
    its short-labeling E3."""
    if states is None:
        states = sq_states(M0=90, M1=90, M2=90, M3=90)
    return LoopSpec(
        branch_long=(("M0", 2), ("M1", 1), ("M2", 1)),
        branch_short=(("M0", 1),),
        closing="M3",
        entry_edge=3,
        states=states,
    )


class TestLoopResidual:
    def test_square_closes(self):
        r = residual_for(square_loop_spec())
        assert abs(r.yaw) < 1e-10
        assert math.hypot(r.x, r.y) < 1e-10

    def test_square_perturbed_any_single_sigma(self):
        for mid in ("M0", "M1", "M2", "M3"):
            sigmas = {"M0": 90.0, "M1": 90.0, "M2": 90.0, "M3": 90.0}
            sigmas[mid] += 1.0
            r = residual_for(square_loop_spec(sq_states(**sigmas)))
            assert math.hypot(r.x, r.y) > 1e-4, mid

    def test_trivial_loop_identical_branches(self):
        st = {"M0": ModuleState("M0", deg(80)), "X": ModuleState("X", deg(100))}
        spec = LoopSpec(
            branch_long=(("M0", 2),),
            branch_short=(("M0", 2),),
            closing="X",
            entry_edge=0,
            states=st,
        )
        r = residual_for(spec)
        assert abs(r.yaw) < 1e-12 and math.hypot(r.x, r.y) < 1e-12

    def test_empty_branches_rejected(self):
        with pytest.raises(KinematicsError):
            loop_residual([], [], ModuleState("M", deg(90)), 1)


class TestSolveLoop:
    def test_square_one_free_returns_90(self):
        states = sq_states(M0=90, M1=101, M2=90, M3=90)
        res = solve_loop(square_loop_spec(states), {"M1"})
        assert res.feasible
        assert math.degrees(res.sigmas["M1"]) == pytest.approx(90.0, abs=1e-8)
        assert res.residual_norm < 1e-8

    def test_triangle_equal_theta_returns_120(self):
        states = {
            "M1": ModuleState("M1", deg(90), 0),
            "M2": ModuleState("M2", deg(90), 0),
            "M3": ModuleState("M3", deg(90), 1),
        }
        spec = LoopSpec(
            branch_long=(("M1", 1), ("M2", 3)),
            branch_short=(("M1", 2),),
            closing="M3",
            entry_edge=1,
            states=states,
        )
        res = solve_loop(spec, {"M1", "M2", "M3"}, equalize=True)
        assert res.feasible
        for mid in ("M1", "M2", "M3"):
            assert math.degrees(res.thetas[mid]) == pytest.approx(120.0, abs=1e-9)

    def test_out_of_limits_is_infeasible(self):
        # three modules fixed at 95 force the fourth to 95 as well, which
        # its own folding limits forbid
        narrow = ModuleParams(theta_min=deg(96), theta_max=deg(135))
        states = sq_states(M0=95, M2=95, M3=95)
        states["M1"] = ModuleState("M1", deg(100), 0, narrow)
        res = solve_loop(square_loop_spec(states), {"M1"})
        assert not res.feasible
        assert res.residual_norm > 1e-8

    def test_no_free_modules_reports_current_residual(self):
        res = solve_loop(square_loop_spec(), set())
        assert res.feasible
        assert res.sigmas == {}

    def test_solved_configuration_has_tiny_residual(self):
        states = sq_states(M0=90, M1=110, M2=75, M3=90)
        res = solve_loop(square_loop_spec(states), {"M1", "M2", "M3"})
        assert res.feasible
        assert res.residual_norm < 1e-8


class TestDampedLeastSquares:
    def test_solves_smooth_system(self):
        def fun(x):
            return np.array([x[0] ** 2 + x[1] - 3.0, x[0] - x[1] + 1.0])

        res = damped_least_squares(
            fun, np.array([2.0, 2.0]), np.array([-5.0, -5.0]), np.array([5.0, 5.0])
        )
        assert np.linalg.norm(res.residual) < 1e-10

    def test_respects_bounds(self):
        def fun(x):
            return np.array([x[0] - 10.0])

        res = damped_least_squares(
            fun, np.array([0.0]), np.array([-1.0]), np.array([1.0])
        )
        assert res.x[0] == pytest.approx(1.0)

    def test_finite_difference_jacobian_consistency(self):
        # the solver's central-difference step reproduces an analytic
        # derivative to the expected order on the loop residual
        from rhombot.loops import residual_vector

        spec = square_loop_spec(sq_states(M0=90, M1=97, M2=88, M3=92))

        def fun(sigma):
            return residual_vector(spec.with_sigmas({"M1": float(sigma[0])}))

        h = 1e-6
        fd = (fun(np.array([deg(97) + h])) - fun(np.array([deg(97) - h]))) / (2 * h)
        h2 = 5e-7
        fd2 = (fun(np.array([deg(97) + h2])) - fun(np.array([deg(97) - h2]))) / (2 * h2)
        assert np.allclose(fd, fd2, rtol=1e-5)
