"""Stateful planning session: load a scenario, query state, dry-run and
commit morphpivot operations.

Messages are plain dicts with the envelope {v: 1, id, kind, payload}; every
request gets exactly one response echoing its id. `propose` never mutates:
it dry-runs the operation and stores the preview under an op id; `commit`
applies a stored proposal atomically, provided the state version has not
moved since the proposal was made (optimistic concurrency). The session
keeps its message log, so replaying the log into a fresh session
reproduces the state exactly.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .engine import (
    EngineConfig,
    EngineError,
    MorphPivotOp,
    MorphPivotOutcome,
    MorphTarget,
    SimFrame,
    morphpivot,
    plan_alignment,
)
from .kinematics import ModuleState, footprint
from .scenario_io import parse_scenario, scenario_to_ktree, ScenarioError
from .topology import Connection, KTree, TopologyError, check_invariants

PROTOCOL_VERSION = 1
HISTORY_LIMIT = 64


class SessionError(Exception):
    def __init__(self, code: str, message: str, details: dict | None = None):
        super().__init__(message)
        self.code = code
        self.details = details or {}


def _connection_from(payload, path: str) -> Connection:
    if not isinstance(payload, list) or len(payload) != 4:
        raise SessionError("bad_request", f"{path} must be [module, edge, module, edge]")
    a, ea, b, eb = payload
    if not isinstance(a, str) or not isinstance(b, str):
        raise SessionError("bad_request", f"{path}: module ids must be strings")
    if ea not in (0, 1, 2, 3) or eb not in (0, 1, 2, 3):
        raise SessionError("bad_request", f"{path}: edge indices must be 0..3")
    return Connection(a, ea, b, eb)


def _targets_from(payload, path: str) -> tuple[MorphTarget, ...]:
    if payload is None:
        return ()
    if not isinstance(payload, list):
        raise SessionError("bad_request", f"{path} must be a list")
    out = []
    for i, t in enumerate(payload):
        if not isinstance(t, dict) or "module" not in t or "theta_deg" not in t:
            raise SessionError(
                "bad_request", f"{path}[{i}] needs module and theta_deg"
            )
        out.append(
            MorphTarget(
                str(t["module"]),
                math.radians(float(t["theta_deg"])),
                int(t.get("order", i)),
            )
        )
    return tuple(out)


def _op_from(payload, path: str = "op") -> MorphPivotOp:
    if not isinstance(payload, dict):
        raise SessionError("bad_request", f"{path} must be a mapping")
    if "new_con" not in payload or "new_discon" not in payload:
        raise SessionError("bad_request", f"{path} needs new_con and new_discon")
    return MorphPivotOp(
        new_con=_connection_from(payload["new_con"], f"{path}.new_con"),
        new_discon=_connection_from(payload["new_discon"], f"{path}.new_discon"),
        pre_morph=_targets_from(payload.get("pre_morph"), f"{path}.pre_morph"),
        post_morph=_targets_from(payload.get("post_morph"), f"{path}.post_morph"),
        morph_rate=float(payload.get("morph_rate", 0.2)),
    )


def frame_message(frame: SimFrame, params: dict | None = None) -> dict:
    """Broadcast form of a frame; carries server-computed footprints so
    clients never do kinematics of their own."""
    modules = []
    for mid in sorted(frame.sigmas):
        pose = frame.poses[mid]
        entry = {
            "id": mid,
            "sigma": frame.sigmas[mid],
            "pose": {"yaw": pose.yaw, "x": pose.x, "y": pose.y},
        }
        if params and mid in params:
            st = ModuleState(mid, frame.sigmas[mid], 0, params[mid])
            entry["footprint"] = [[x, y] for x, y in footprint(st, pose).vertices]
        modules.append(entry)
    return {
        "v": PROTOCOL_VERSION,
        "kind": "frame",
        "time": frame.time,
        "modules": modules,
        "events": [frame.event],
    }


@dataclass
class _Proposal:
    op_id: int
    base_version: int
    op: MorphPivotOp
    outcome: MorphPivotOutcome


@dataclass
class Session:
    tree: KTree | None = None
    config: EngineConfig = field(default_factory=EngineConfig)
    version: int = 0
    log: list[dict] = field(default_factory=list)
    history: deque = field(default_factory=lambda: deque(maxlen=HISTORY_LIMIT))
    proposals: dict[int, _Proposal] = field(default_factory=dict)
    next_op_id: int = 1

    # -- state snapshots ---------------------------------------------------

    def state_snapshot(self) -> dict:
        tree = self._require_tree()
        poses = tree.world_poses()
        modules = []
        for mid in sorted(tree.modules):
            st = tree.modules[mid]
            pose = poses[mid]
            fp = footprint(st, pose)
            modules.append(
                {
                    "id": mid,
                    "sigma": st.sigma,
                    "theta": st.theta,
                    "parity": st.parity,
                    "a": st.params.a,
                    "theta_min": st.params.theta_min,
                    "theta_max": st.params.theta_max,
                    "pose": {"yaw": pose.yaw, "x": pose.x, "y": pose.y},
                    "footprint": [[x, y] for x, y in fp.vertices],
                    "free_edges": tree.free_edges(mid),
                }
            )
        return {
            "version": self.version,
            "root": tree.root,
            "pending_orphan": tree.orphan,
            "modules": modules,
            "connections": [
                [c.module_a, c.edge_a, c.module_b, c.edge_b, kind]
                for c, kind in tree.all_connections()
            ],
        }

    def _require_tree(self) -> KTree:
        if self.tree is None:
            raise SessionError("out_of_order", "no scenario loaded yet")
        return self.tree

    def _bump(self, new_tree: KTree):
        self.history.append(self.tree)
        self.tree = new_tree
        self.version += 1
        self.proposals.clear()

    # -- message handling ----------------------------------------------------

    def handle(self, msg: dict) -> tuple[dict, list[dict]]:
        """Process one request; returns (response, frame broadcasts)."""
        if not isinstance(msg, dict):
            return self._error(None, "bad_request", "message must be a mapping"), []
        mid = msg.get("id")
        if msg.get("v") != PROTOCOL_VERSION:
            return self._error(mid, "bad_request", "unsupported protocol version"), []
        kind = msg.get("kind")
        payload = msg.get("payload") or {}
        handler = getattr(self, f"_handle_{kind}", None)
        if handler is None or not isinstance(kind, str) or kind.startswith("_"):
            return self._error(mid, "bad_request", f"unknown message kind {kind!r}"), []
        self.log.append(msg)
        try:
            result, frames = handler(payload)
        except SessionError as exc:
            return self._error(mid, exc.code, str(exc), exc.details), []
        except (ScenarioError, TopologyError, EngineError) as exc:
            return self._error(mid, "engine", str(exc)), []
        response = {"v": PROTOCOL_VERSION, "id": mid, "ok": True, "payload": result}
        params = (
            {m: st.params for m, st in self.tree.modules.items()}
            if self.tree is not None
            else None
        )
        return response, [frame_message(f, params) for f in frames]

    def _error(self, mid, code: str, message: str, details: dict | None = None) -> dict:
        return {
            "v": PROTOCOL_VERSION,
            "id": mid,
            "ok": False,
            "error": {"code": code, "message": message, "details": details or {}},
        }

    def _handle_load(self, payload) -> tuple[dict, list[SimFrame]]:
        text = payload.get("scenario")
        if not isinstance(text, str):
            raise SessionError("bad_request", "load needs a scenario text payload")
        doc = parse_scenario(text)
        tree = scenario_to_ktree(doc)
        problems = check_invariants(
            tree, doc.defaults.pos_tol, math.radians(doc.defaults.ang_tol_deg)
        )
        if problems:
            raise SessionError("bad_request", "; ".join(problems))
        self.tree = tree
        self.config = doc.defaults.config()
        self.version = 1
        self.history.clear()
        self.proposals.clear()
        return {"version": self.version, "modules": len(tree.modules)}, []

    def _handle_get_state(self, payload) -> tuple[dict, list[SimFrame]]:
        return self.state_snapshot(), []

    def _handle_plan(self, payload) -> tuple[dict, list[SimFrame]]:
        tree = self._require_tree()
        con = _connection_from(payload.get("new_con"), "plan.new_con")
        morphing = payload.get("morphing")
        if not isinstance(morphing, list) or not morphing:
            raise SessionError("bad_request", "plan needs a non-empty morphing list")
        result = plan_alignment(tree, con, {str(m) for m in morphing})
        return {
            "thetas_deg": {m: math.degrees(t) for m, t in result.thetas.items()},
            "residual_norm": result.residual_norm,
        }, []

    def _handle_propose(self, payload) -> tuple[dict, list[SimFrame]]:
        tree = self._require_tree()
        base = payload.get("version")
        if base != self.version:
            raise SessionError(
                "conflict",
                f"proposal based on version {base}, session is at {self.version}",
                {"current_version": self.version},
            )
        op = _op_from(payload.get("op"))
        try:
            outcome = morphpivot(tree, op, self.config)
        except (EngineError, TopologyError) as exc:
            return {
                "accepted": False,
                "error": str(exc),
                "stage": getattr(exc, "stage", None),
            }, []
        preview_session = Session(tree=outcome.tree, version=self.version)
        report = {
            "pos_offset": outcome.report.pos_offset,
            "ang_offset": outcome.report.ang_offset,
            "passed": outcome.report.passed,
        }
        if not outcome.ok:
            return {"accepted": False, "report": report, "error": outcome.error}, []
        proposal = _Proposal(self.next_op_id, self.version, op, outcome)
        self.proposals[proposal.op_id] = proposal
        self.next_op_id += 1
        return {
            "accepted": True,
            "op_id": proposal.op_id,
            "report": report,
            "preview": preview_session.state_snapshot(),
        }, []

    def _handle_commit(self, payload) -> tuple[dict, list[SimFrame]]:
        self._require_tree()
        op_id = payload.get("op_id")
        proposal = self.proposals.get(op_id)
        if proposal is None:
            raise SessionError(
                "conflict",
                f"no pending proposal with op id {op_id!r}",
                {"current_version": self.version},
            )
        if proposal.base_version != self.version:
            raise SessionError(
                "conflict",
                f"proposal {op_id} was made at version {proposal.base_version}, "
                f"session is at {self.version}",
                {"current_version": self.version},
            )
        outcome = proposal.outcome
        self._bump(outcome.tree)
        return {
            "version": self.version,
            "report": {
                "pos_offset": outcome.report.pos_offset,
                "ang_offset": outcome.report.ang_offset,
                "passed": outcome.report.passed,
            },
        }, list(outcome.frames)

    def _handle_set_theta(self, payload) -> tuple[dict, list[SimFrame]]:
        tree = self._require_tree()
        mid = payload.get("module")
        if not isinstance(mid, str):
            raise SessionError("bad_request", "set_theta needs a module id")
        try:
            theta = math.radians(float(payload["theta_deg"]))
        except (KeyError, TypeError, ValueError):
            raise SessionError("bad_request", "set_theta needs theta_deg") from None
        st = tree.state(mid)
        if not (st.params.theta_min - 1e-12 <= theta <= st.params.theta_max + 1e-12):
            raise SessionError(
                "bad_request",
                f"theta {math.degrees(theta):.2f} deg outside limits for {mid}",
            )
        from .engine import execute_morph

        new_tree, frames = execute_morph(
            tree,
            [MorphTarget(mid, theta, 0)],
            self.config,
            include_initial=False,
        )
        self._bump(new_tree)
        last = frames[-1:] if frames else []
        return {"version": self.version, "theta_deg": math.degrees(theta)}, last

    def _handle_undo(self, payload) -> tuple[dict, list[SimFrame]]:
        self._require_tree()
        if not self.history:
            raise SessionError("bad_request", "nothing to undo")
        self.tree = self.history.pop()
        self.version += 1
        self.proposals.clear()
        return {"version": self.version}, []

    def _handle_subscribe_frames(self, payload) -> tuple[dict, list[SimFrame]]:
        self._require_tree()
        return {"subscribed": True}, []


def replay(messages: list[dict]) -> Session:
    """Feed a recorded message log into a fresh session (determinism check)."""
    session = Session()
    for msg in messages:
        session.handle(msg)
    return session
