"""Scenario, script, trajectory and measurement file formats.

Scenarios and scripts are YAML (human-editable, comments allowed);
trajectories are JSON lines, one frame per line. Angles are degrees and
lengths meters in every file; radians appear only in memory. Parsing is
strict: unknown fields are rejected with their path, semantic errors name
the offending field.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import yaml

from .engine import EngineConfig, MorphPivotOp, MorphTarget, SimFrame
from .geometry import Pose2
from .kinematics import ModuleParams, ModuleState, edge_outward_frame, forward_kinematics, local_vertices
from .topology import ANG_TOL, POS_TOL, Connection, KTree, initialize_ktree


class ScenarioError(ValueError):
    """Parse or validation failure, locating the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class ModuleDecl:
    id: str
    theta_deg: float
    a: float = 0.140
    theta_min_deg: float = 45.0
    theta_max_deg: float = 135.0

    def params(self) -> ModuleParams:
        return ModuleParams(
            self.a, math.radians(self.theta_min_deg), math.radians(self.theta_max_deg)
        )

    def state(self) -> ModuleState:
        return ModuleState(self.id, math.radians(self.theta_deg), 0, self.params())


@dataclass(frozen=True)
class PoseDecl:
    """A pose as written in scenario files: degrees and meters."""

    yaw_deg: float = 0.0
    x: float = 0.0
    y: float = 0.0

    def pose(self) -> Pose2:
        return Pose2(math.radians(self.yaw_deg), self.x, self.y)

    @staticmethod
    def from_pose(pose: Pose2) -> "PoseDecl":
        return PoseDecl(math.degrees(pose.yaw), pose.x, pose.y)


@dataclass(frozen=True)
class EngineDefaults:
    pos_tol: float = POS_TOL
    ang_tol_deg: float = math.degrees(ANG_TOL)
    morph_rate: float = 0.2
    dt: float = 0.05
    clearance: float = 0.0

    def config(self) -> EngineConfig:
        return EngineConfig(
            pos_tol=self.pos_tol,
            ang_tol=math.radians(self.ang_tol_deg),
            morph_rate=self.morph_rate,
            dt=self.dt,
            clearance=self.clearance,
        )


@dataclass(frozen=True)
class ScenarioDoc:
    version: int
    root: str
    root_pose: PoseDecl
    modules: tuple[ModuleDecl, ...]
    connections: tuple[Connection, ...]
    defaults: EngineDefaults = EngineDefaults()


def _require_map(node, path: str, allowed: set[str], required: set[str]) -> dict:
    if not isinstance(node, dict):
        raise ScenarioError(path, f"expected a mapping, got {type(node).__name__}")
    for key in node:
        if key not in allowed:
            raise ScenarioError(f"{path}.{key}", "unknown field")
    for key in required:
        if key not in node:
            raise ScenarioError(path, f"missing required field {key!r}")
    return node


def _number(node, path: str) -> float:
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ScenarioError(path, f"expected a number, got {node!r}")
    return float(node)


def _string(node, path: str) -> str:
    if not isinstance(node, str) or not node:
        raise ScenarioError(path, f"expected a non-empty string, got {node!r}")
    return node


def _edge(node, path: str) -> int:
    if isinstance(node, bool) or not isinstance(node, int) or node not in (0, 1, 2, 3):
        raise ScenarioError(path, f"edge index must be 0..3, got {node!r}")
    return node


def _pose(node, path: str) -> PoseDecl:
    m = _require_map(node, path, {"yaw_deg", "x", "y"}, {"yaw_deg", "x", "y"})
    return PoseDecl(
        _number(m["yaw_deg"], f"{path}.yaw_deg"),
        _number(m["x"], f"{path}.x"),
        _number(m["y"], f"{path}.y"),
    )


def _pose_dict(pose: PoseDecl) -> dict:
    return {"yaw_deg": pose.yaw_deg, "x": pose.x, "y": pose.y}


def _connection(node, path: str) -> Connection:
    if not isinstance(node, list) or len(node) != 4:
        raise ScenarioError(path, "connection must be [module, edge, module, edge]")
    return Connection(
        _string(node[0], f"{path}[0]"),
        _edge(node[1], f"{path}[1]"),
        _string(node[2], f"{path}[2]"),
        _edge(node[3], f"{path}[3]"),
    )


def _load_yaml(text: str, what: str) -> object:
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ScenarioError(what, f"syntax error{where}: {exc}") from exc


def parse_scenario(text: str) -> ScenarioDoc:
    data = _load_yaml(text, "scenario")
    top = _require_map(
        data, "scenario",
        {"version", "root", "root_pose", "modules", "connections", "defaults"},
        {"version", "root", "root_pose", "modules"},
    )
    version = top["version"]
    if version != 1:
        raise ScenarioError("scenario.version", f"unsupported version {version!r}")

    if not isinstance(top["modules"], list) or not top["modules"]:
        raise ScenarioError("scenario.modules", "expected a non-empty list")
    modules = []
    seen: set[str] = set()
    for i, node in enumerate(top["modules"]):
        path = f"scenario.modules[{i}]"
        m = _require_map(
            node, path,
            {"id", "theta_deg", "params"},
            {"id", "theta_deg"},
        )
        mid = _string(m["id"], f"{path}.id")
        if mid in seen:
            raise ScenarioError(f"{path}.id", f"duplicate module id {mid!r}")
        seen.add(mid)
        theta = _number(m["theta_deg"], f"{path}.theta_deg")
        pnode = m.get("params", {})
        p = _require_map(
            pnode, f"{path}.params",
            {"a", "theta_min_deg", "theta_max_deg"}, set(),
        )
        decl = ModuleDecl(
            mid,
            theta,
            _number(p.get("a", 0.140), f"{path}.params.a"),
            _number(p.get("theta_min_deg", 45.0), f"{path}.params.theta_min_deg"),
            _number(p.get("theta_max_deg", 135.0), f"{path}.params.theta_max_deg"),
        )
        if not (decl.theta_min_deg <= decl.theta_deg <= decl.theta_max_deg):
            raise ScenarioError(
                f"{path}.theta_deg",
                f"module {mid!r}: theta {decl.theta_deg} outside limits "
                f"[{decl.theta_min_deg}, {decl.theta_max_deg}]",
            )
        try:
            decl.state()
        except ValueError as exc:
            raise ScenarioError(path, f"invalid module {mid!r}: {exc}") from exc
        modules.append(decl)

    root = _string(top["root"], "scenario.root")
    if root not in seen:
        raise ScenarioError("scenario.root", f"root {root!r} is not a declared module")
    root_pose = _pose(top["root_pose"], "scenario.root_pose")

    connections = []
    used_edges: set[tuple[str, int]] = set()
    for i, node in enumerate(top.get("connections", []) or []):
        path = f"scenario.connections[{i}]"
        conn = _connection(node, path)
        for mid, edge in ((conn.module_a, conn.edge_a), (conn.module_b, conn.edge_b)):
            if mid not in seen:
                raise ScenarioError(path, f"unknown module {mid!r}")
            if (mid, edge) in used_edges:
                raise ScenarioError(path, f"edge {mid}.E{edge} used twice")
            used_edges.add((mid, edge))
        connections.append(conn)

    dnode = top.get("defaults", {}) or {}
    d = _require_map(
        dnode, "scenario.defaults",
        {"pos_tol", "ang_tol_deg", "morph_rate", "dt", "clearance"}, set(),
    )
    base = EngineDefaults()
    defaults = EngineDefaults(
        _number(d.get("pos_tol", base.pos_tol), "scenario.defaults.pos_tol"),
        _number(d.get("ang_tol_deg", base.ang_tol_deg), "scenario.defaults.ang_tol_deg"),
        _number(d.get("morph_rate", base.morph_rate), "scenario.defaults.morph_rate"),
        _number(d.get("dt", base.dt), "scenario.defaults.dt"),
        _number(d.get("clearance", base.clearance), "scenario.defaults.clearance"),
    )
    return ScenarioDoc(
        1, root, root_pose, tuple(modules), tuple(connections), defaults
    )


def serialize_scenario(doc: ScenarioDoc) -> str:
    data = {
        "version": doc.version,
        "root": doc.root,
        "root_pose": _pose_dict(doc.root_pose),
        "modules": [
            {
                "id": m.id,
                "theta_deg": m.theta_deg,
                "params": {
                    "a": m.a,
                    "theta_min_deg": m.theta_min_deg,
                    "theta_max_deg": m.theta_max_deg,
                },
            }
            for m in doc.modules
        ],
        "connections": [
            [c.module_a, c.edge_a, c.module_b, c.edge_b] for c in doc.connections
        ],
        "defaults": asdict(doc.defaults),
    }
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None)


def derive_poses(doc: ScenarioDoc) -> dict[str, Pose2]:
    """World pose of every module's declared E0 frame, propagated from the
    root through the declared connections (surplus connections are
    validated later by the tree initializer)."""
    states = {m.id: m.state() for m in doc.modules}
    adj: dict[str, list[tuple[str, Connection]]] = {m.id: [] for m in doc.modules}
    for conn in doc.connections:
        adj[conn.module_a].append((conn.module_b, conn))
        adj[conn.module_b].append((conn.module_a, conn))
    poses = {doc.root: doc.root_pose.pose()}
    queue = [doc.root]
    half_turn = Pose2(math.pi, 0.0, 0.0)
    while queue:
        u = queue.pop(0)
        for v, conn in sorted(adj[u], key=lambda item: item[0]):
            if v in poses:
                continue
            u_edge = conn.edge_of(u)
            v_edge = conn.edge_of(v)
            poses[v] = (
                poses[u]
                .compose(edge_outward_frame(states[u], u_edge))
                .compose(half_turn)
                .compose(edge_outward_frame(states[v], v_edge).inverse())
            )
            queue.append(v)
    missing = sorted(set(states) - set(poses))
    if missing:
        raise ScenarioError(
            "scenario.connections", f"modules not connected to the root: {missing}"
        )
    return poses


def scenario_to_ktree(doc: ScenarioDoc) -> KTree:
    poses = derive_poses(doc)
    modules = {m.id: (m.state(), poses[m.id]) for m in doc.modules}
    config = doc.defaults.config()
    return initialize_ktree(
        modules, list(doc.connections), doc.root, config.pos_tol, config.ang_tol
    )


def ktree_to_scenario(tree: KTree, defaults: EngineDefaults = EngineDefaults()) -> ScenarioDoc:
    """Snapshot a tree back into a document, under its current labeling."""
    modules = tuple(
        ModuleDecl(
            mid,
            math.degrees(st.theta),
            st.params.a,
            math.degrees(st.params.theta_min),
            math.degrees(st.params.theta_max),
        )
        for mid, st in sorted(tree.modules.items())
    )
    connections = tuple(c for c, _kind in tree.all_connections())
    return ScenarioDoc(
        1, tree.root, PoseDecl.from_pose(tree.root_pose), modules, connections,
        defaults,
    )


# --- scripts ---------------------------------------------------------------


def parse_script(text: str) -> list[MorphPivotOp]:
    data = _load_yaml(text, "script")
    top = _require_map(data, "script", {"version", "ops"}, {"version", "ops"})
    if top["version"] != 1:
        raise ScenarioError("script.version", f"unsupported version {top['version']!r}")
    if not isinstance(top["ops"], list):
        raise ScenarioError("script.ops", "expected a list")
    ops = []
    for i, node in enumerate(top["ops"]):
        path = f"script.ops[{i}]"
        m = _require_map(
            node, path,
            {"new_con", "new_discon", "pre_morph", "post_morph", "morph_rate"},
            {"new_con", "new_discon"},
        )
        ops.append(
            MorphPivotOp(
                new_con=_connection(m["new_con"], f"{path}.new_con"),
                new_discon=_connection(m["new_discon"], f"{path}.new_discon"),
                pre_morph=_targets(m.get("pre_morph", []), f"{path}.pre_morph"),
                post_morph=_targets(m.get("post_morph", []), f"{path}.post_morph"),
                morph_rate=_number(m.get("morph_rate", 0.2), f"{path}.morph_rate"),
            )
        )
    return ops


def _targets(node, path: str) -> tuple[MorphTarget, ...]:
    if not isinstance(node, list):
        raise ScenarioError(path, "expected a list of morph targets")
    out = []
    for i, t in enumerate(node):
        m = _require_map(
            t, f"{path}[{i}]",
            {"module", "theta_deg", "order"},
            {"module", "theta_deg"},
        )
        order = m.get("order", i)
        if isinstance(order, bool) or not isinstance(order, int):
            raise ScenarioError(f"{path}[{i}].order", f"expected an integer, got {order!r}")
        out.append(
            MorphTarget(
                _string(m["module"], f"{path}[{i}].module"),
                math.radians(_number(m["theta_deg"], f"{path}[{i}].theta_deg")),
                order,
            )
        )
    return tuple(out)


def serialize_script(ops: list[MorphPivotOp]) -> str:
    def conn_list(c: Connection) -> list:
        return [c.module_a, c.edge_a, c.module_b, c.edge_b]

    def target_list(targets) -> list:
        return [
            {"module": t.module, "theta_deg": math.degrees(t.theta), "order": t.order}
            for t in targets
        ]

    data = {
        "version": 1,
        "ops": [
            {
                "new_con": conn_list(op.new_con),
                "new_discon": conn_list(op.new_discon),
                "pre_morph": target_list(op.pre_morph),
                "post_morph": target_list(op.post_morph),
                "morph_rate": op.morph_rate,
            }
            for op in ops
        ],
    }
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None)


# --- trajectories ----------------------------------------------------------


def serialize_frames(frames: list[SimFrame]) -> str:
    """JSON-lines trajectory: one frame per line, exact float round-trip."""
    lines = []
    for f in frames:
        record = {
            "t": f.time,
            "event": f.event,
            "modules": [
                {
                    "id": mid,
                    "sigma": f.sigmas[mid],
                    "yaw": f.poses[mid].yaw,
                    "x": f.poses[mid].x,
                    "y": f.poses[mid].y,
                }
                for mid in sorted(f.sigmas)
            ],
            "connections": [
                [c.module_a, c.edge_a, c.module_b, c.edge_b, kind]
                for c, kind in f.connections
            ],
        }
        lines.append(json.dumps(record, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def parse_frames(text: str) -> list[SimFrame]:
    frames = []
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"trajectory line {i + 1}", str(exc)) from exc
        frames.append(
            SimFrame(
                time=float(record["t"]),
                event=str(record["event"]),
                sigmas={m["id"]: float(m["sigma"]) for m in record["modules"]},
                poses={
                    m["id"]: Pose2(float(m["yaw"]), float(m["x"]), float(m["y"]))
                    for m in record["modules"]
                },
                connections=tuple(
                    (Connection(a, ea, b, eb), kind)
                    for a, ea, b, eb, kind in record["connections"]
                ),
            )
        )
    return frames


# --- measurements and the accuracy pipeline --------------------------------


@dataclass(frozen=True)
class MeasurementRow:
    label: str
    thetas: tuple[float, ...]  # radians
    x: float  # meters
    y: float


@dataclass(frozen=True)
class MeasurementSeries:
    rows: tuple[MeasurementRow, ...]


@dataclass(frozen=True)
class ChainSpec:
    """A serial chain: interface edge per link, shared module parameters."""

    interfaces: tuple[int, ...]  # exit edge of modules 0..n-2
    params: ModuleParams = ModuleParams()

    @property
    def length(self) -> int:
        return len(self.interfaces) + 1


def parse_measurements(text: str, params: ModuleParams = ModuleParams()) -> MeasurementSeries:
    """CSV with header label,theta_0..theta_{n-1},x_mm,y_mm; degrees and
    millimeters convert on ingest."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ScenarioError("measurements", "empty file")
    header = [h.strip() for h in lines[0].split(",")]
    n = len(header) - 3
    expected = ["label"] + [f"theta_{i}" for i in range(n)] + ["x_mm", "y_mm"]
    if n < 1 or header != expected:
        raise ScenarioError(
            "measurements header",
            f"expected label,theta_0..theta_{{n-1}},x_mm,y_mm, got {','.join(header)}",
        )
    rows = []
    for li, line in enumerate(lines[1:], start=2):
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(header):
            raise ScenarioError(f"measurements line {li}", "wrong number of columns")
        try:
            thetas = tuple(math.radians(float(c)) for c in cells[1 : 1 + n])
            x = float(cells[1 + n]) / 1000.0
            y = float(cells[2 + n]) / 1000.0
        except ValueError as exc:
            raise ScenarioError(f"measurements line {li}", str(exc)) from exc
        for i, th in enumerate(thetas):
            if not (params.theta_min - 1e-9 <= th <= params.theta_max + 1e-9):
                raise ScenarioError(
                    f"measurements line {li}",
                    f"theta_{i} = {math.degrees(th):.2f} deg outside limits",
                )
        rows.append(MeasurementRow(cells[0], thetas, x, y))
    return MeasurementSeries(tuple(rows))


def predict_tip(chain: ChainSpec, thetas: tuple[float, ...]) -> tuple[float, float]:
    """Predicted world position of the end module's E1/E2 corner vertex (the
    far vertex of the rhombus) for the given folding angles."""
    if len(thetas) != chain.length:
        raise ScenarioError(
            "chain", f"expected {chain.length} thetas, got {len(thetas)}"
        )
    states = [
        ModuleState(f"C{i}", th, 0, chain.params) for i, th in enumerate(thetas)
    ]
    pose = forward_kinematics(list(zip(states[:-1], chain.interfaces)))
    corner = local_vertices(states[-1])[2]
    return pose.apply(*corner)


def evaluate_rmse(
    series: MeasurementSeries, chain: ChainSpec
) -> tuple[float, float]:
    """Per-axis RMSE between measured tip positions and chain predictions."""
    if not series.rows:
        raise ScenarioError("measurements", "no rows to evaluate")
    sx = 0.0
    sy = 0.0
    for row in series.rows:
        px, py = predict_tip(chain, row.thetas)
        sx += (row.x - px) ** 2
        sy += (row.y - py) ** 2
    n = len(series.rows)
    return math.sqrt(sx / n), math.sqrt(sy / n)
