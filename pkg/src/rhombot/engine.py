"""Morphpivoting: validated, time-discretized reconfiguration steps.

One morphpivot runs four sequential phases on a kinematic tree: morph the
affected modules until the new docking pair coincides, connect it,
disconnect the old pair (re-parenting the orphaned side), and morph back.
`run_script` chains such operations, stopping at the first failure.

Morphing is sequential by order index (modules sharing an index ramp
simultaneously); every emitted frame is checked for pairwise collisions
between unconnected modules and for consistency of all loop connections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .geometry import Pose2, poly_overlap
from .kinematics import footprint
from .loops import LoopSolveResult, LoopSpec, solve_loop
from .topology import (
    ANG_TOL,
    POS_TOL,
    Connection,
    ConnectivityError,
    KTree,
    OccupiedEdgeError,
    TopologyError,
    assign_new_parent,
    connect,
    disconnect,
    docking_offsets,
)

MORPH_RATE = 0.2  # rad/s
DT = 0.05  # s
CLEARANCE = 0.0  # touching allowed: docked modules share edges


class EngineError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class CollisionError(EngineError):
    def __init__(self, stage: str, time: float, pair: tuple[str, str]):
        super().__init__(
            stage, f"modules {pair[0]} and {pair[1]} overlap at t={time:.3f} s"
        )
        self.time = time
        self.pair = pair


class InfeasibleError(EngineError):
    def __init__(self, stage: str, message: str, residual_norm: float):
        super().__init__(stage, message)
        self.residual_norm = residual_norm


@dataclass(frozen=True)
class MorphTarget:
    module: str
    theta: float
    order: int = 0


@dataclass(frozen=True)
class MorphPivotOp:
    """One reconfiguration step: dock `new_con`, release `new_discon`."""

    new_con: Connection
    new_discon: Connection
    pre_morph: tuple[MorphTarget, ...] = ()
    post_morph: tuple[MorphTarget, ...] = ()
    morph_rate: float = MORPH_RATE


@dataclass(frozen=True)
class SimFrame:
    time: float
    event: str  # morph | connect | disconnect | reparent
    sigmas: dict[str, float]
    poses: dict[str, Pose2]
    connections: tuple[tuple[Connection, str], ...]


@dataclass(frozen=True)
class DockingReport:
    pos_offset: float
    ang_offset: float
    pos_tol: float = POS_TOL
    ang_tol: float = ANG_TOL

    @property
    def passed(self) -> bool:
        return self.pos_offset <= self.pos_tol and self.ang_offset <= self.ang_tol


@dataclass
class EngineConfig:
    pos_tol: float = POS_TOL
    ang_tol: float = ANG_TOL
    morph_rate: float = MORPH_RATE
    dt: float = DT
    clearance: float = CLEARANCE
    sequential: bool = True  # False ramps every target simultaneously


def _snapshot(tree: KTree, time: float, event: str) -> SimFrame:
    return SimFrame(
        time,
        event,
        {mid: st.sigma for mid, st in tree.modules.items()},
        tree.world_poses(),
        tuple(tree.all_connections()),
    )


def _tree_path(tree: KTree, mid: str) -> list[str]:
    path = [mid]
    while path[-1] != tree.root:
        path.append(tree.parent[path[-1]][0])
    path.reverse()
    return path


def _branch_chain(tree: KTree, mid: str) -> tuple[tuple[str, int], ...]:
    """(module, exit edge) pairs from the root down to `mid`'s E0 frame."""
    path = _tree_path(tree, mid)
    return tuple(
        (pid, tree.parent[child][1]) for pid, child in zip(path, path[1:])
    )


def loop_spec_for_connection(tree: KTree, con: Connection) -> LoopSpec:
    """The closed loop the connection would create, over the current tree."""
    long_chain = _branch_chain(tree, con.module_a) + ((con.module_a, con.edge_a),)
    short_chain = _branch_chain(tree, con.module_b)
    return LoopSpec(
        branch_long=long_chain,
        branch_short=short_chain,
        closing=con.module_b,
        entry_edge=con.edge_b,
        states=dict(tree.modules),
    )


def plan_alignment(
    tree: KTree,
    con: Connection,
    morphing: set[str] | list[str],
    equalize: bool | None = None,
) -> LoopSolveResult:
    """Sigma/theta targets that bring the connection's edge frames into
    coincidence, solving the loop the new connection closes.

    By default a common folding angle for all morphing modules is tried
    first (closures are often symmetric families, and the shared angle is
    the canonical pick); independent sigmas are the fallback.
    """
    if tree.pending:
        raise EngineError("plan", "tree has a pending orphan")
    used = tree.occupied_edges()
    for mid, edge in ((con.module_a, con.edge_a), (con.module_b, con.edge_b)):
        tree.state(mid)
        if (mid, edge) in used:
            raise OccupiedEdgeError(f"edge {mid}.E{edge} is already occupied")
    for mid in morphing:
        tree.state(mid)
    spec = loop_spec_for_connection(tree, con)
    modes = [equalize] if equalize is not None else [True, False]
    result = None
    for mode in modes:
        result = solve_loop(spec, set(morphing), equalize=mode)
        if result.feasible:
            return result
    raise InfeasibleError(
        "plan",
        f"no in-limit sigmas close the loop (residual {result.residual_norm:.3e})",
        result.residual_norm,
    )


def _collision_pairs(tree: KTree) -> list[tuple[str, str]]:
    connected = set()
    for conn, _kind in tree.all_connections():
        connected.add(frozenset((conn.module_a, conn.module_b)))
    ids = sorted(tree.modules)
    return [
        (u, v)
        for i, u in enumerate(ids)
        for v in ids[i + 1 :]
        if frozenset((u, v)) not in connected
    ]


def _check_frame(tree: KTree, time: float, stage: str, config: EngineConfig):
    poses = tree.world_poses()
    prints = {mid: footprint(st, poses[mid]) for mid, st in tree.modules.items()}
    for u, v in _collision_pairs(tree):
        if poly_overlap(prints[u], prints[v], config.clearance):
            raise CollisionError(stage, time, (u, v))
    for conn in tree.loops:
        pos, ang = docking_offsets(
            tree, (conn.module_a, conn.edge_a), (conn.module_b, conn.edge_b), poses
        )
        if pos > config.pos_tol or ang > config.ang_tol:
            raise EngineError(
                stage,
                f"morph breaks loop connection {conn.module_a}.E{conn.edge_a}-"
                f"{conn.module_b}.E{conn.edge_b} at t={time:.3f} s "
                f"({pos:.6f} m, {math.degrees(ang):.3f} deg)",
            )


def execute_morph(
    tree: KTree,
    targets: list[MorphTarget] | tuple[MorphTarget, ...],
    config: EngineConfig | None = None,
    t0: float = 0.0,
    include_initial: bool = True,
    stage: str = "morph",
) -> tuple[KTree, list[SimFrame]]:
    """Ramp module thetas to their targets, one order group at a time.

    Emits a frame every `dt`; the last frame of each group lands exactly on
    the targets. Raises on collision, on a broken loop connection, and on
    out-of-limit targets.
    """
    config = config or EngineConfig()
    if tree.pending:
        raise EngineError(stage, "tree has a pending orphan")
    if config.morph_rate <= 0 or config.dt <= 0:
        raise EngineError(stage, "morph rate and dt must be positive")
    for tgt in targets:
        st = tree.state(tgt.module)
        if not (
            st.params.theta_min - 1e-12 <= tgt.theta <= st.params.theta_max + 1e-12
        ):
            raise EngineError(
                stage,
                f"target theta {math.degrees(tgt.theta):.3f} deg for "
                f"{tgt.module} is outside limits",
            )

    frames: list[SimFrame] = []
    t = t0
    if include_initial:
        _check_frame(tree, t, stage, config)
        frames.append(_snapshot(tree, t, stage))

    if config.sequential:
        groups = sorted({tgt.order for tgt in targets})
        grouped = [[tgt for tgt in targets if tgt.order == g] for g in groups]
    else:
        grouped = [list(targets)] if targets else []

    current = tree
    for group in grouped:
        start = {tgt.module: current.state(tgt.module).theta for tgt in group}
        deltas = {tgt.module: tgt.theta - start[tgt.module] for tgt in group}
        duration = max(abs(d) for d in deltas.values()) / config.morph_rate
        steps = math.ceil(duration / config.dt - 1e-12)
        for i in range(1, steps + 1):
            elapsed = i * config.dt
            modules = dict(current.modules)
            for tgt in group:
                d = deltas[tgt.module]
                travel = math.copysign(
                    min(config.morph_rate * elapsed, abs(d)), d
                )
                modules[tgt.module] = modules[tgt.module].with_theta(
                    start[tgt.module] + travel
                )
            current = replace(current, modules=modules)
            t += config.dt
            _check_frame(current, t, stage, config)
            frames.append(_snapshot(current, t, stage))
    return current, frames


@dataclass
class MorphPivotOutcome:
    tree: KTree
    frames: list[SimFrame]
    report: DockingReport
    ok: bool
    error: str | None = None


def _validate_op(tree: KTree, op: MorphPivotOp, config: EngineConfig):
    used = tree.occupied_edges()
    for mid, edge in (
        (op.new_con.module_a, op.new_con.edge_a),
        (op.new_con.module_b, op.new_con.edge_b),
    ):
        tree.state(mid)
        if (mid, edge) in used:
            raise OccupiedEdgeError(f"edge {mid}.E{edge} is already occupied")
    if op.new_con.module_a == op.new_con.module_b:
        raise TopologyError("a module cannot dock to itself")
    existing = {c.pair_key() for c, _k in tree.all_connections()}
    if op.new_discon.pair_key() not in existing:
        raise TopologyError(
            f"connection {op.new_discon.module_a}.E{op.new_discon.edge_a}-"
            f"{op.new_discon.module_b}.E{op.new_discon.edge_b} does not exist"
        )
    # connectivity with the new connection in and the old one out
    adj: dict[str, set[str]] = {m: set() for m in tree.modules}
    for conn, _kind in tree.all_connections():
        if conn.pair_key() == op.new_discon.pair_key():
            continue
        adj[conn.module_a].add(conn.module_b)
        adj[conn.module_b].add(conn.module_a)
    adj[op.new_con.module_a].add(op.new_con.module_b)
    adj[op.new_con.module_b].add(op.new_con.module_a)
    seen = {tree.root}
    stack = [tree.root]
    while stack:
        for v in adj[stack.pop()]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    if len(seen) < len(tree.modules):
        raise ConnectivityError(
            "removing the old connection would split the system"
        )


def morphpivot(
    tree: KTree,
    op: MorphPivotOp,
    config: EngineConfig | None = None,
    t0: float = 0.0,
) -> MorphPivotOutcome:
    """Run one full morphpivot; the input tree is never mutated.

    On a docking failure the original tree comes back with the failing
    report; stage errors raise with the stage tag.
    """
    config = config or EngineConfig()
    config = replace(config, morph_rate=op.morph_rate or config.morph_rate)
    if tree.pending:
        raise EngineError("validate", "tree has a pending orphan")
    try:
        _validate_op(tree, op, config)
    except (TopologyError, EngineError) as exc:
        raise EngineError("validate", str(exc)) from exc

    morphed, frames = execute_morph(
        tree, op.pre_morph, config, t0=t0, include_initial=True, stage="pre_morph"
    )
    t = frames[-1].time if frames else t0

    pos, ang = docking_offsets(
        morphed,
        (op.new_con.module_a, op.new_con.edge_a),
        (op.new_con.module_b, op.new_con.edge_b),
    )
    report = DockingReport(pos, ang, config.pos_tol, config.ang_tol)
    if not report.passed:
        return MorphPivotOutcome(
            tree, frames, report, False,
            f"docking failed: {pos:.6f} m, {math.degrees(ang):.4f} deg",
        )

    try:
        current = connect(morphed, op.new_con, config.pos_tol, config.ang_tol)
        frames.append(_snapshot(current, t, "connect"))
        current = disconnect(current, op.new_discon)
        frames.append(_snapshot(current, t, "disconnect"))
        if current.pending:
            current = assign_new_parent(current, current.orphan)
            frames.append(_snapshot(current, t, "reparent"))
    except TopologyError as exc:
        stage = "connect" if "dock" in str(exc) else "disconnect"
        raise EngineError(stage, str(exc)) from exc

    current, post_frames = execute_morph(
        current, op.post_morph, config, t0=t, include_initial=False,
        stage="post_morph",
    )
    frames.extend(post_frames)
    return MorphPivotOutcome(current, frames, report, True)


@dataclass
class ScriptResult:
    tree: KTree
    frames: list[SimFrame]
    reports: list[DockingReport]
    completed: int
    error: str | None = None
    failed_index: int | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def run_script(
    tree: KTree,
    ops: list[MorphPivotOp],
    config: EngineConfig | None = None,
) -> ScriptResult:
    """Execute operations in order; stop at the first failure, keeping the
    tree produced by the completed prefix."""
    config = config or EngineConfig()
    frames: list[SimFrame] = []
    reports: list[DockingReport] = []
    current = tree
    t = 0.0
    for index, op in enumerate(ops):
        try:
            outcome = morphpivot(current, op, config, t0=t)
        except (EngineError, TopologyError) as exc:
            return ScriptResult(
                current, frames, reports, index, f"op {index}: {exc}", index
            )
        reports.append(outcome.report)
        if not outcome.ok:
            frames.extend(outcome.frames)
            return ScriptResult(
                current, frames, reports, index,
                f"op {index}: {outcome.error}", index,
            )
        frames.extend(outcome.frames)
        current = outcome.tree
        if frames:
            t = frames[-1].time
    return ScriptResult(current, frames, reports, len(ops))
