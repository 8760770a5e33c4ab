"""Deterministic SVG rendering of module configurations and trajectories.

Scale: 1 m = 500 px, origin lower-left, y up. Output is byte-stable for
identical input (fixed float formatting, sorted module order).
"""

from __future__ import annotations

import os

from .engine import SimFrame
from .kinematics import ModuleParams, ModuleState, edge_outward_frame, local_vertices
from .topology import KTree

PX_PER_M = 500.0
PAD_PX = 30.0

_MODULE_FILL = "#cfe3f5"
_ORPHAN_FILL = "#f5d4cf"
_EDGE_COLOR = "#1f3a5f"
_TREE_MARK = "#0a7d32"
_LOOP_MARK = "#c06014"


def _fmt(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


class _Canvas:
    def __init__(self, xmin: float, ymin: float, xmax: float, ymax: float):
        self.xmin, self.ymin = xmin, ymin
        self.width = (xmax - xmin) * PX_PER_M + 2 * PAD_PX
        self.height = (ymax - ymin) * PX_PER_M + 2 * PAD_PX
        self.ymax = ymax

    def to_px(self, x: float, y: float) -> tuple[float, float]:
        return (
            (x - self.xmin) * PX_PER_M + PAD_PX,
            (self.ymax - y) * PX_PER_M + PAD_PX,
        )


def _frame_states(frame: SimFrame, params: dict[str, ModuleParams]) -> dict[str, ModuleState]:
    return {
        mid: ModuleState(mid, sigma, 0, params.get(mid, ModuleParams()))
        for mid, sigma in frame.sigmas.items()
    }


def frame_bounds(
    frame: SimFrame, params: dict[str, ModuleParams]
) -> tuple[float, float, float, float]:
    states = _frame_states(frame, params)
    xs: list[float] = []
    ys: list[float] = []
    for mid, st in states.items():
        pose = frame.poses[mid]
        for vx, vy in local_vertices(st):
            wx, wy = pose.apply(vx, vy)
            xs.append(wx)
            ys.append(wy)
    return min(xs), min(ys), max(xs), max(ys)


def frame_svg(
    frame: SimFrame,
    params: dict[str, ModuleParams],
    root: str | None = None,
    orphan: str | None = None,
    bounds: tuple[float, float, float, float] | None = None,
    title: str | None = None,
) -> str:
    """One SVG drawing: module footprints, edge labels, connection markers."""
    if bounds is None:
        bounds = frame_bounds(frame, params)
    canvas = _Canvas(*bounds)
    states = _frame_states(frame, params)
    poses = frame.poses

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(canvas.width)}" '
        f'height="{_fmt(canvas.height)}" viewBox="0 0 {_fmt(canvas.width)} '
        f'{_fmt(canvas.height)}">',
        f'<rect width="{_fmt(canvas.width)}" height="{_fmt(canvas.height)}" fill="white"/>',
    ]
    if title is None:
        title = f"t = {frame.time:.3f} s ({frame.event})"
    parts.append(
        f'<text x="{_fmt(PAD_PX)}" y="{_fmt(PAD_PX * 0.6)}" font-size="14" '
        f'font-family="monospace" fill="#333">{title}</text>'
    )

    for mid in sorted(states):
        st = states[mid]
        pose = poses[mid]
        verts = [pose.apply(vx, vy) for vx, vy in local_vertices(st)]
        px = [canvas.to_px(x, y) for x, y in verts]
        points = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in px)
        fill = _ORPHAN_FILL if mid == orphan else _MODULE_FILL
        dash = ' stroke-dasharray="6,4"' if mid == orphan else ""
        parts.append(
            f'<polygon points="{points}" fill="{fill}" stroke="{_EDGE_COLOR}" '
            f'stroke-width="2"{dash}/>'
        )
        cx = sum(x for x, _ in verts) / 4.0
        cy = sum(y for _, y in verts) / 4.0
        tx, ty = canvas.to_px(cx, cy)
        name = f"{mid}*" if mid == root else mid
        parts.append(
            f'<text x="{_fmt(tx)}" y="{_fmt(ty)}" font-size="13" '
            f'font-family="monospace" text-anchor="middle" fill="#000">{name}</text>'
        )
        # edge labels, nudged toward the center
        for k in range(4):
            x0, y0 = verts[k]
            x1, y1 = verts[(k + 1) % 4]
            mx, my = (x0 + x1) / 2.0, (y0 + y1) / 2.0
            lx = mx + (cx - mx) * 0.28
            ly = my + (cy - my) * 0.28
            ex, ey = canvas.to_px(lx, ly)
            parts.append(
                f'<text x="{_fmt(ex)}" y="{_fmt(ey)}" font-size="9" '
                f'font-family="monospace" text-anchor="middle" '
                f'fill="#555">E{k}</text>'
            )

    for conn, kind in frame.connections:
        st = states[conn.module_a]
        pose = poses[conn.module_a]
        edge = conn.edge_a
        f = pose.compose(edge_outward_frame(st, edge))
        x, y = canvas.to_px(f.x, f.y)
        color = _TREE_MARK if kind == "tree" else _LOOP_MARK
        if kind == "tree":
            parts.append(
                f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="4" fill="{color}"/>'
            )
        else:
            parts.append(
                f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="5" fill="none" '
                f'stroke="{color}" stroke-width="2"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def tree_snapshot(tree: KTree, time: float = 0.0, event: str = "state") -> SimFrame:
    return SimFrame(
        time,
        event,
        {mid: st.sigma for mid, st in tree.modules.items()},
        tree.world_poses(),
        tuple(tree.all_connections()),
    )


def tree_svg(tree: KTree, title: str | None = None) -> str:
    frame = tree_snapshot(tree)
    params = {mid: st.params for mid, st in tree.modules.items()}
    return frame_svg(
        frame, params, root=tree.root, orphan=tree.orphan, title=title
    )


def export_frames(
    frames: list[SimFrame],
    out_dir: str,
    params: dict[str, ModuleParams],
    root: str | None = None,
    svg: bool = True,
    stride: int = 1,
) -> list[str]:
    """Write trajectory.jsonl plus (optionally) one SVG per frame.

    The SVG viewport is fixed across the sequence. Returns written paths.
    """
    from .scenario_io import serialize_frames

    if not frames:
        raise ValueError("no frames to export")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    traj_path = os.path.join(out_dir, "trajectory.jsonl")
    with open(traj_path, "w", encoding="utf-8") as fh:
        fh.write(serialize_frames(frames))
    written.append(traj_path)
    if svg:
        bounds = None
        for frame in frames:
            b = frame_bounds(frame, params)
            bounds = b if bounds is None else (
                min(bounds[0], b[0]), min(bounds[1], b[1]),
                max(bounds[2], b[2]), max(bounds[3], b[3]),
            )
        for i, frame in enumerate(frames):
            if i % stride and i != len(frames) - 1:
                continue
            path = os.path.join(out_dir, f"frame_{i:05d}.svg")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(frame_svg(frame, params, root=root, bounds=bounds))
            written.append(path)
    return written
