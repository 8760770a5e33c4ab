"""Kinematic tree over connected modules plus non-tree (loop) connections.

The tree is a value: every operation returns a new KTree. One module is the
root; its E0 frame is fixed to the base and anchors world coordinates.
Every other module's E0 is the edge docked to its parent, which the
initializer and the re-parenting routine enforce by relabeling
(`remap_sigma`). Connections beyond the spanning tree are loop-edges.

Disconnecting a tree edge leaves the child subtree orphaned: the tree goes
into a transient pending state that only `assign_new_parent` can discharge;
other mutating operations reject pending trees.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace

from .geometry import Pose2, wrap_angle
from .kinematics import (
    ModuleState,
    edge_outward_frame,
    edge_transform,
    footprint,
    remap_sigma,
)

# Matches the physical docking tolerance scale; overridable everywhere.
POS_TOL = 0.005
ANG_TOL = math.radians(3.0)


class TopologyError(ValueError):
    pass


class UnknownModuleError(TopologyError):
    pass


class OccupiedEdgeError(TopologyError):
    pass


class MisalignedError(TopologyError):
    def __init__(self, message: str, pos_offset: float, ang_offset: float):
        super().__init__(message)
        self.pos_offset = pos_offset
        self.ang_offset = ang_offset


class ConnectivityError(TopologyError):
    """Removing the connection would split the system."""


class UnrecoverableSplitError(TopologyError):
    """An orphan has no neighbor that reaches the root."""


class PendingStateError(TopologyError):
    """Operation rejected while an orphaned subtree is pending."""


@dataclass(frozen=True)
class Connection:
    """An edge-to-edge docking between two modules."""

    module_a: str
    edge_a: int
    module_b: str
    edge_b: int

    def normalized(self) -> "Connection":
        if (self.module_a, self.edge_a) <= (self.module_b, self.edge_b):
            return self
        return Connection(self.module_b, self.edge_b, self.module_a, self.edge_a)

    def pair_key(self) -> tuple[tuple[str, int], tuple[str, int]]:
        c = self.normalized()
        return ((c.module_a, c.edge_a), (c.module_b, c.edge_b))

    def involves(self, mid: str) -> bool:
        return mid in (self.module_a, self.module_b)

    def other(self, mid: str) -> tuple[str, int]:
        if mid == self.module_a:
            return self.module_b, self.edge_b
        if mid == self.module_b:
            return self.module_a, self.edge_a
        raise UnknownModuleError(f"{mid} not part of connection {self}")

    def edge_of(self, mid: str) -> int:
        if mid == self.module_a:
            return self.edge_a
        if mid == self.module_b:
            return self.edge_b
        raise UnknownModuleError(f"{mid} not part of connection {self}")


@dataclass(frozen=True)
class KTree:
    """Rooted kinematic tree: module states, parent links and loop-edges."""

    root: str
    root_pose: Pose2
    modules: dict[str, ModuleState]
    parent: dict[str, tuple[str, int]]  # child id -> (parent id, parent edge)
    loops: tuple[Connection, ...] = ()
    orphan: str | None = None
    orphan_pose: Pose2 | None = None

    @property
    def pending(self) -> bool:
        return self.orphan is not None

    def state(self, mid: str) -> ModuleState:
        try:
            return self.modules[mid]
        except KeyError:
            raise UnknownModuleError(f"unknown module {mid!r}") from None

    def tree_connections(self) -> list[Connection]:
        return [
            Connection(pid, pedge, child, 0)
            for child, (pid, pedge) in sorted(self.parent.items())
        ]

    def all_connections(self) -> list[tuple[Connection, str]]:
        out = [(c, "tree") for c in self.tree_connections()]
        out.extend((c, "loop") for c in self.loops)
        return out

    def occupied_edges(self) -> set[tuple[str, int]]:
        used = {(self.root, 0)}  # root E0 is bound to the base
        for child, (pid, pedge) in self.parent.items():
            used.add((child, 0))
            used.add((pid, pedge))
        for c in self.loops:
            used.add((c.module_a, c.edge_a))
            used.add((c.module_b, c.edge_b))
        return used

    def free_edges(self, mid: str) -> list[int]:
        self.state(mid)
        used = self.occupied_edges()
        return [k for k in range(4) if (mid, k) not in used]

    def adjacency(self) -> dict[str, list[tuple[str, Connection]]]:
        adj: dict[str, list[tuple[str, Connection]]] = {m: [] for m in self.modules}
        for conn, _kind in self.all_connections():
            adj[conn.module_a].append((conn.module_b, conn))
            adj[conn.module_b].append((conn.module_a, conn))
        return adj

    def children(self, mid: str) -> list[str]:
        return sorted(c for c, (p, _e) in self.parent.items() if p == mid)

    def descendants(self, mid: str) -> set[str]:
        out: set[str] = set()
        stack = [mid]
        while stack:
            cur = stack.pop()
            for child in self.children(cur):
                if child not in out:
                    out.add(child)
                    stack.append(child)
        return out

    def world_poses(self) -> dict[str, Pose2]:
        """World pose of every module's E0 frame, by tree traversal.

        A pending orphan subtree hangs from the pose recorded when it was
        disconnected.
        """
        poses: dict[str, Pose2] = {self.root: self.root_pose}
        if self.orphan is not None:
            if self.orphan_pose is None:
                raise TopologyError("pending tree lost its orphan pose")
            poses[self.orphan] = self.orphan_pose
        pendings = deque(sorted(self.parent.items()))
        guard = 0
        while pendings:
            child, (pid, pedge) = pendings.popleft()
            if pid in poses:
                poses[child] = poses[pid].compose(
                    edge_transform(self.modules[pid], pedge)
                )
                guard = 0
                continue
            pendings.append((child, (pid, pedge)))
            guard += 1
            if guard > len(pendings):
                raise TopologyError("parent map does not reach the root")
        return poses

    def footprints(self) -> dict[str, "object"]:
        poses = self.world_poses()
        return {mid: footprint(st, poses[mid]) for mid, st in self.modules.items()}

    def edge_frame(self, mid: str, edge: int, poses: dict[str, Pose2] | None = None) -> Pose2:
        """World frame of a module edge, y-axis pointing out of the module."""
        if poses is None:
            poses = self.world_poses()
        return poses[mid].compose(edge_outward_frame(self.state(mid), edge))


def docking_offsets(
    tree: KTree, a: tuple[str, int], b: tuple[str, int],
    poses: dict[str, Pose2] | None = None,
) -> tuple[float, float]:
    """(position offset, angular offset from the half-turn) between two edges."""
    fa = tree.edge_frame(a[0], a[1], poses)
    fb = tree.edge_frame(b[0], b[1], poses)
    pos = math.hypot(fa.x - fb.x, fa.y - fb.y)
    ang = abs(wrap_angle(fa.yaw - fb.yaw - math.pi))
    return pos, ang


def _offset_edge(edge: int, offset: int) -> int:
    return (edge - offset) % 4


def initialize_ktree(
    modules: dict[str, tuple[ModuleState, Pose2]],
    connections: list[Connection],
    root: str,
    pos_tol: float = POS_TOL,
    ang_tol: float = ANG_TOL,
) -> KTree:
    """Build a KTree from declared module poses and connections.

    The spanning tree is grown breadth-first from the root (ties broken by
    ascending module id); remaining connections become loop-edges. Every
    non-root module is relabeled so its tree connection is E0. Declared
    pairings must be geometrically consistent within tolerance.
    """
    if root not in modules:
        raise UnknownModuleError(f"root {root!r} is not a declared module")

    used: set[tuple[str, int]] = set()
    for conn in connections:
        for mid, edge in ((conn.module_a, conn.edge_a), (conn.module_b, conn.edge_b)):
            if mid not in modules:
                raise UnknownModuleError(f"connection references unknown module {mid!r}")
            if edge not in (0, 1, 2, 3):
                raise TopologyError(f"bad edge index {edge} on {mid}")
            if (mid, edge) in used:
                raise OccupiedEdgeError(f"edge {mid}.E{edge} used by two connections")
            used.add((mid, edge))
        if conn.module_a == conn.module_b:
            raise TopologyError(f"module {conn.module_a} connected to itself")
    if (root, 0) in used:
        raise OccupiedEdgeError(f"root edge {root}.E0 is reserved for the base")

    for conn in connections:
        sa, pa = modules[conn.module_a]
        sb, pb = modules[conn.module_b]
        fa = pa.compose(edge_outward_frame(sa, conn.edge_a))
        fb = pb.compose(edge_outward_frame(sb, conn.edge_b))
        pos = math.hypot(fa.x - fb.x, fa.y - fb.y)
        ang = abs(wrap_angle(fa.yaw - fb.yaw - math.pi))
        if pos > pos_tol or ang > ang_tol:
            raise MisalignedError(
                f"connection {conn.module_a}.E{conn.edge_a}-"
                f"{conn.module_b}.E{conn.edge_b} is inconsistent: "
                f"offset {pos:.6f} m, {math.degrees(ang):.3f} deg",
                pos, ang,
            )

    neighbor_map: dict[str, list[tuple[str, Connection]]] = {m: [] for m in modules}
    for conn in connections:
        neighbor_map[conn.module_a].append((conn.module_b, conn))
        neighbor_map[conn.module_b].append((conn.module_a, conn))

    offsets: dict[str, int] = {root: 0}
    parent: dict[str, tuple[str, int]] = {}
    tree_conns: set[tuple] = set()
    order = deque([root])
    while order:
        u = order.popleft()
        for v, conn in sorted(neighbor_map[u], key=lambda item: item[0]):
            if v in offsets:
                continue
            v_edge_in = conn.edge_of(v)
            u_edge_in = conn.edge_of(u)
            offsets[v] = v_edge_in
            parent[v] = (u, _offset_edge(u_edge_in, offsets[u]))
            tree_conns.add(conn.pair_key())
            order.append(v)
    if len(offsets) < len(modules):
        missing = sorted(set(modules) - set(offsets))
        raise ConnectivityError(f"modules not connected to the root: {missing}")

    states = {
        mid: remap_sigma(st, offsets[mid]) for mid, (st, _pose) in modules.items()
    }
    loops = []
    for conn in connections:
        if conn.pair_key() in tree_conns:
            continue
        loops.append(
            Connection(
                conn.module_a,
                _offset_edge(conn.edge_a, offsets[conn.module_a]),
                conn.module_b,
                _offset_edge(conn.edge_b, offsets[conn.module_b]),
            ).normalized()
        )
    loops.sort(key=Connection.pair_key)
    return KTree(root, modules[root][1], states, parent, tuple(loops))


def is_conn(
    tree: KTree, frm: str, to: str, excluding: str | None = None
) -> tuple[bool, list[str]]:
    """BFS reachability over tree- and loop-edges, with an optional module
    removed. Returns the shortest path (ties broken by ascending id)."""
    tree.state(frm)
    tree.state(to)
    if excluding is not None and excluding in (frm, to):
        return False, []
    if frm == to:
        return True, [frm]
    adj = tree.adjacency()
    prev: dict[str, str] = {frm: ""}
    queue = deque([frm])
    while queue:
        u = queue.popleft()
        for v, _conn in sorted(adj[u], key=lambda item: item[0]):
            if v == excluding or v in prev:
                continue
            prev[v] = u
            if v == to:
                path = [v]
                while prev[path[-1]]:
                    path.append(prev[path[-1]])
                path.reverse()
                return True, path
            queue.append(v)
    return False, []


def _reject_pending(tree: KTree):
    if tree.pending:
        raise PendingStateError(
            f"tree has pending orphan {tree.orphan!r}; assign_new_parent first"
        )


def connect(
    tree: KTree,
    conn: Connection,
    pos_tol: float = POS_TOL,
    ang_tol: float = ANG_TOL,
) -> KTree:
    """Add a loop-edge between two free, geometrically coincident edges."""
    _reject_pending(tree)
    tree.state(conn.module_a)
    tree.state(conn.module_b)
    if conn.module_a == conn.module_b:
        raise TopologyError(f"module {conn.module_a} cannot dock to itself")
    used = tree.occupied_edges()
    for mid, edge in ((conn.module_a, conn.edge_a), (conn.module_b, conn.edge_b)):
        if edge not in (0, 1, 2, 3):
            raise TopologyError(f"bad edge index {edge} on {mid}")
        if (mid, edge) in used:
            raise OccupiedEdgeError(f"edge {mid}.E{edge} is already occupied")
    pos, ang = docking_offsets(
        tree, (conn.module_a, conn.edge_a), (conn.module_b, conn.edge_b)
    )
    if pos > pos_tol or ang > ang_tol:
        raise MisalignedError(
            f"edges {conn.module_a}.E{conn.edge_a} and "
            f"{conn.module_b}.E{conn.edge_b} are misaligned: "
            f"offset {pos:.6f} m, {math.degrees(ang):.4f} deg",
            pos, ang,
        )
    loops = sorted(tree.loops + (conn.normalized(),), key=Connection.pair_key)
    return replace(tree, loops=tuple(loops))


def _find_connection(tree: KTree, conn: Connection) -> tuple[Connection, str]:
    want = conn.pair_key()
    for existing, kind in tree.all_connections():
        if existing.pair_key() == want:
            return existing, kind
    raise TopologyError(
        f"no connection {conn.module_a}.E{conn.edge_a}-"
        f"{conn.module_b}.E{conn.edge_b} exists"
    )


def disconnect(tree: KTree, conn: Connection) -> KTree:
    """Remove a connection.

    Loop-edges vanish without structural effect. Removing a tree edge
    orphans the child subtree: the returned tree is pending until
    `assign_new_parent` runs. Removal that would split the system is
    rejected with no mutation.
    """
    _reject_pending(tree)
    existing, kind = _find_connection(tree, conn)
    if kind == "loop":
        loops = tuple(c for c in tree.loops if c.pair_key() != existing.pair_key())
        return replace(tree, loops=loops)

    # tree edge: Connection(parent, pedge, child, 0)
    child = existing.module_b
    reachable, _path = _is_conn_without(tree, tree.root, child, existing)
    if not reachable:
        raise ConnectivityError(
            f"removing {existing.module_a}.E{existing.edge_a}-"
            f"{existing.module_b}.E{existing.edge_b} would split the system"
        )
    orphan_pose = tree.world_poses()[child]
    parent = dict(tree.parent)
    del parent[child]
    return replace(tree, parent=parent, orphan=child, orphan_pose=orphan_pose)


def _is_conn_without(
    tree: KTree, frm: str, to: str, removed: Connection
) -> tuple[bool, list[str]]:
    adj: dict[str, list[str]] = {m: [] for m in tree.modules}
    for conn, _kind in tree.all_connections():
        if conn.pair_key() == removed.pair_key():
            continue
        adj[conn.module_a].append(conn.module_b)
        adj[conn.module_b].append(conn.module_a)
    prev = {frm: ""}
    queue = deque([frm])
    while queue:
        u = queue.popleft()
        for v in sorted(adj[u]):
            if v in prev:
                continue
            prev[v] = u
            if v == to:
                path = [v]
                while prev[path[-1]]:
                    path.append(prev[path[-1]])
                path.reverse()
                return True, path
            queue.append(v)
    return to in prev, []


def _module_connections(tree: KTree, mid: str) -> list[tuple[int, str, int, str]]:
    """(edge of mid, neighbor, neighbor edge, kind), ascending by edge then id."""
    out = []
    for conn, kind in tree.all_connections():
        if conn.involves(mid):
            other, other_edge = conn.other(mid)
            out.append((conn.edge_of(mid), other, other_edge, kind))
    out.sort(key=lambda item: (item[0], item[1]))
    return out


def _remap_in_place(
    states: dict[str, ModuleState],
    parent: dict[str, tuple[str, int]],
    loops: list[Connection],
    mid: str,
    new_e0: int,
):
    """Relabel `mid` so edge `new_e0` becomes E0, rewriting every reference."""
    if new_e0 == 0:
        return
    states[mid] = remap_sigma(states[mid], new_e0)
    for child, (pid, pedge) in list(parent.items()):
        if pid == mid:
            parent[child] = (pid, _offset_edge(pedge, new_e0))
    for i, c in enumerate(loops):
        ea = _offset_edge(c.edge_a, new_e0) if c.module_a == mid else c.edge_a
        eb = _offset_edge(c.edge_b, new_e0) if c.module_b == mid else c.edge_b
        if c.module_a == mid or c.module_b == mid:
            loops[i] = Connection(c.module_a, ea, c.module_b, eb).normalized()


def assign_new_parent(tree: KTree, mid: str) -> KTree:
    """Re-anchor an orphaned module (and its subtree) into the tree.

    The orphan's connections are scanned in ascending edge order (ties by
    neighbor id); the first neighbor still reachable from the root without
    passing through the orphan becomes the new parent. The reachability
    path is re-oriented where it crosses the orphan's old subtree, loop
    edges along it are promoted, displaced parent links are demoted, and
    every re-parented module is relabeled so its E0 faces its new parent.
    """
    if tree.orphan != mid:
        raise TopologyError(f"module {mid!r} is not the pending orphan")

    subtree = {mid} | tree.descendants(mid)
    choice = None
    for edge, neighbor, neighbor_edge, kind in _module_connections(tree, mid):
        ok, path = is_conn(tree, tree.root, neighbor, excluding=mid)
        if ok:
            choice = (edge, neighbor, neighbor_edge, path)
            break
    if choice is None:
        raise UnrecoverableSplitError(
            f"orphan {mid!r} has no neighbor connected to the root"
        )
    edge, neighbor, neighbor_edge, path = choice

    states = dict(tree.modules)
    parent = dict(tree.parent)
    loops = list(tree.loops)

    def demote_parent_link(v: str):
        pid, pedge = parent.pop(v)
        loops.append(Connection(pid, pedge, v, 0).normalized())

    def promote(u: str, v: str):
        """Make u the parent of v through their physical connection."""
        cands = [
            c for c in loops if c.involves(u) and c.involves(v)
        ]
        if parent.get(v, (None,))[0] == u and not cands:
            return  # already oriented u -> v
        if v in parent:
            demote_parent_link(v)
            cands = [c for c in loops if c.involves(u) and c.involves(v)]
        if not cands:
            raise TopologyError(f"no physical connection between {u} and {v}")
        conn = min(cands, key=Connection.pair_key)
        loops.remove(conn)
        v_edge = conn.edge_of(v)
        u_edge = conn.edge_of(u)
        _remap_in_place(states, parent, loops, v, v_edge)
        parent[v] = (u, u_edge)

    for prev_mod, cur in zip(path, path[1:]):
        if cur in subtree:
            promote(prev_mod, cur)
    promote(neighbor, mid)

    loops.sort(key=Connection.pair_key)
    return KTree(
        tree.root, tree.root_pose, states, parent, tuple(loops), None, None
    )


def check_invariants(
    tree: KTree,
    pos_tol: float = POS_TOL,
    ang_tol: float = ANG_TOL,
    allow_pending: bool = False,
) -> list[str]:
    """Every violated KTree invariant, as human-readable diagnostics."""
    problems: list[str] = []
    if tree.root not in tree.modules:
        return [f"root {tree.root!r} is not a module"]
    if tree.pending and not allow_pending:
        problems.append(f"tree has a pending orphan {tree.orphan!r}")

    expected_parents = set(tree.modules) - {tree.root}
    if tree.orphan is not None:
        expected_parents.discard(tree.orphan)
    if set(tree.parent) != expected_parents:
        problems.append(
            f"parent map keys {sorted(tree.parent)} do not match "
            f"non-root modules {sorted(expected_parents)}"
        )
        return problems

    for mid in tree.modules:
        seen = {mid}
        cur = mid
        while cur != tree.root and cur != tree.orphan:
            if cur not in tree.parent:
                problems.append(f"{mid}: parent chain breaks at {cur}")
                break
            cur = tree.parent[cur][0]
            if cur in seen:
                problems.append(f"{mid}: parent chain cycles at {cur}")
                break
            seen.add(cur)

    usage: dict[tuple[str, int], int] = {}
    for key in [(tree.root, 0)]:
        usage[key] = usage.get(key, 0) + 1
    for child, (pid, pedge) in tree.parent.items():
        for key in ((child, 0), (pid, pedge)):
            usage[key] = usage.get(key, 0) + 1
    for c in tree.loops:
        for key in ((c.module_a, c.edge_a), (c.module_b, c.edge_b)):
            usage[key] = usage.get(key, 0) + 1
    for (m, e), count in sorted(usage.items()):
        if count > 1:
            problems.append(f"edge {m}.E{e} used {count} times")

    for mid, st in sorted(tree.modules.items()):
        if not st.theta_in_limits():
            problems.append(
                f"{mid}: theta {math.degrees(st.theta):.3f} deg outside limits"
            )

    if not problems:
        poses = tree.world_poses()
        for conn, kind in tree.all_connections():
            pos, ang = docking_offsets(
                tree,
                (conn.module_a, conn.edge_a),
                (conn.module_b, conn.edge_b),
                poses,
            )
            if pos > pos_tol or ang > ang_tol:
                problems.append(
                    f"{kind} connection {conn.module_a}.E{conn.edge_a}-"
                    f"{conn.module_b}.E{conn.edge_b} inconsistent: "
                    f"{pos:.6f} m, {math.degrees(ang):.3f} deg"
                )
    return problems
