"""Closed-loop constraint over module chains and a damped least-squares solver.

A loop is described by two branches that start at the same base frame and
end at the center of one shared (closing) module. The long branch enters
the closing module through `entry_edge`, so it sees the module under a
relabeled reference edge; the short branch reaches it through its own E0.
Comparing the two center poses, after converting the short branch through
the relabeling motion, yields a residual that is the identity exactly when
the loop closes, including orientation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2
from .kinematics import (
    KinematicsError,
    ModuleState,
    center_transform,
    forward_kinematics,
    relabel_frame,
    remap_sigma,
)

RESIDUAL_OK = 1e-8


@dataclass(frozen=True)
class LoopSpec:
    """A closed loop over modules, referenced by id so sigmas can be solved.

    branch_long / branch_short: sequences of (module id, exit edge), each
    exit edge being where the next module's E0 docks. The long branch's last
    exit lands on `closing`'s `entry_edge`; the short branch's last exit
    lands on `closing`'s E0. `states` holds every referenced module under
    the labeling its branch uses (the closing module under the short one).
    """

    branch_long: tuple[tuple[str, int], ...]
    branch_short: tuple[tuple[str, int], ...]
    closing: str
    entry_edge: int
    states: dict[str, ModuleState]

    def with_sigmas(self, sigmas: dict[str, float]) -> "LoopSpec":
        states = dict(self.states)
        for mid, sigma in sigmas.items():
            states[mid] = ModuleState(
                mid, sigma, states[mid].parity, states[mid].params
            )
        return LoopSpec(
            self.branch_long, self.branch_short, self.closing, self.entry_edge, states
        )


def loop_residual(
    branch_long: list[tuple[ModuleState, int]],
    branch_short: list[tuple[ModuleState, int]],
    closing: ModuleState,
    entry_edge: int,
) -> Pose2:
    """Pose mismatch between the two branch predictions of the closing
    module's center; identity iff the loop closes.

    `closing` is labeled per the short branch. Both predictions are
    expressed in the long branch's labeling of the center frame: the short
    branch is carried through `relabel_frame(closing, entry_edge)` first.
    """
    if not branch_long and not branch_short:
        raise KinematicsError("loop residual needs at least one non-empty branch")
    closing_long = remap_sigma(closing, entry_edge)
    via_long = forward_kinematics(branch_long).compose(center_transform(closing_long))
    via_short = (
        forward_kinematics(branch_short)
        .compose(relabel_frame(closing, entry_edge))
        .compose(center_transform(closing_long))
    )
    return via_short.inverse().compose(via_long)


def residual_for(spec: LoopSpec) -> Pose2:
    states = spec.states
    long_chain = [(states[mid], k) for mid, k in spec.branch_long]
    short_chain = [(states[mid], k) for mid, k in spec.branch_short]
    return loop_residual(long_chain, short_chain, states[spec.closing], spec.entry_edge)


def residual_vector(spec: LoopSpec) -> np.ndarray:
    """(yaw, x, y) residual with lengths scaled by 1/(2a) of the closing module."""
    r = residual_for(spec)
    scale = 1.0 / (2.0 * spec.states[spec.closing].params.a)
    return np.array([r.yaw, r.x * scale, r.y * scale])


@dataclass
class LeastSquaresResult:
    x: np.ndarray
    residual: np.ndarray
    iterations: int
    converged: bool


def damped_least_squares(
    fun,
    x0: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    max_iter: int = 100,
    step_tol: float = 1e-10,
    fd_step: float = 1e-7,
) -> LeastSquaresResult:
    """Levenberg-style damped least squares with box clipping.

    The Jacobian comes from central finite differences; the damping factor
    adapts on accept/reject. Iteration stops on step norm below `step_tol`,
    a tiny residual, or `max_iter`.
    """
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    r = fun(x)
    cost = float(r @ r)
    lam = 1e-3
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        if math.sqrt(cost) < 1e-13:
            converged = True
            break
        m, n = len(r), len(x)
        jac = np.empty((m, n))
        for j in range(n):
            xp, xm = x.copy(), x.copy()
            xp[j] += fd_step
            xm[j] -= fd_step
            jac[:, j] = (fun(xp) - fun(xm)) / (2.0 * fd_step)
        jtj = jac.T @ jac
        jtr = jac.T @ r
        step = None
        for _ in range(30):
            try:
                delta = np.linalg.solve(jtj + lam * np.eye(n), -jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_try = np.clip(x + delta, lower, upper)
            r_try = fun(x_try)
            cost_try = float(r_try @ r_try)
            if cost_try < cost:
                step = x_try - x
                x, r, cost = x_try, r_try, cost_try
                lam = max(lam * 0.3, 1e-12)
                break
            lam *= 10.0
        if step is None or np.linalg.norm(step) < step_tol:
            converged = True
            break
    return LeastSquaresResult(x, r, iterations, converged)


@dataclass
class LoopSolveResult:
    """Outcome of a loop solve; `feasible` is False when the best residual
    stays above tolerance (e.g. the closure needs sigmas outside limits)."""

    feasible: bool
    sigmas: dict[str, float]
    thetas: dict[str, float]
    residual_norm: float
    residual: Pose2
    iterations: int = 0
    free: tuple[str, ...] = field(default_factory=tuple)


def solve_loop(
    spec: LoopSpec,
    free: set[str] | list[str],
    equalize: bool = False,
    tol: float = RESIDUAL_OK,
) -> LoopSolveResult:
    """Find sigmas for the free modules that close the loop.

    Non-free modules keep the sigmas stored in the spec. With `equalize`,
    all free modules share one physical folding angle (each one's sigma
    follows from its parity), which selects the symmetric closure when one
    exists. Each sigma is kept inside the bounds the module's theta limits
    imply under its parity.
    """
    free_ids = sorted(free)
    if not free_ids:
        r = residual_for(spec)
        norm = float(np.linalg.norm(residual_vector(spec)))
        return LoopSolveResult(norm < tol, {}, {}, norm, r, 0, ())

    if equalize:
        lower = np.array([max(spec.states[m].params.theta_min for m in free_ids)])
        upper = np.array([min(spec.states[m].params.theta_max for m in free_ids)])
        x0 = np.array([float(np.mean([spec.states[m].theta for m in free_ids]))])
    else:
        bounds = [spec.states[mid].sigma_bounds() for mid in free_ids]
        lower = np.array([lo for lo, _ in bounds])
        upper = np.array([hi for _, hi in bounds])
        x0 = np.array([spec.states[m].sigma for m in free_ids])
    if np.any(lower > upper):
        raise KinematicsError("empty sigma bounds for loop solve")

    def assignment(x: np.ndarray) -> dict[str, float]:
        if equalize:
            return {
                mid: spec.states[mid].with_theta(float(x[0])).sigma
                for mid in free_ids
            }
        return {mid: float(v) for mid, v in zip(free_ids, x)}

    def fun(x: np.ndarray) -> np.ndarray:
        return residual_vector(spec.with_sigmas(assignment(x)))

    result = damped_least_squares(fun, x0, lower, upper)
    sigmas = assignment(result.x)
    solved = spec.with_sigmas(sigmas)
    norm = float(np.linalg.norm(residual_vector(solved)))
    thetas = {mid: solved.states[mid].theta for mid in free_ids}
    return LoopSolveResult(
        norm < tol,
        sigmas,
        thetas,
        norm,
        residual_for(solved),
        result.iterations,
        tuple(free_ids),
    )
