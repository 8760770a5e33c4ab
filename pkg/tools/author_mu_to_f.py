"""Author the mu -> F reconfiguration script by searching feasible pivots.

Each planned move names the module to relocate, the module it detaches
from, the module it should dock to, and the grid cell it must land on.
The tool searches free-edge pairs and morph orders, validates every
candidate end-to-end with the engine (docking, collisions, invariants,
landing cell), and freezes the first clean one into scenarios/mu_to_f.yaml.
"""

import itertools
import math
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from rhombot.engine import MorphPivotOp, MorphTarget, morphpivot, plan_alignment
from rhombot.kinematics import footprint
from rhombot.scenario_io import parse_scenario, scenario_to_ktree, serialize_script
from rhombot.topology import Connection, check_invariants, docking_offsets

A = 0.14
HERE = os.path.dirname(os.path.abspath(__file__))
SCENARIOS = os.path.join(HERE, "..", "scenarios")


def cell_center(col, row):
    return (2 * A * col + A, 2 * A * row + A)


def module_center(tree, mid):
    fp = footprint(tree.modules[mid], tree.world_poses()[mid])
    xs = [v[0] for v in fp.vertices]
    ys = [v[1] for v in fp.vertices]
    return (sum(xs) / 4, sum(ys) / 4)


def find_connection(tree, a, b):
    for conn, kind in tree.all_connections():
        if conn.involves(a) and conn.involves(b):
            return conn, kind
    raise SystemExit(f"no connection {a}-{b}")


def try_slide(tree, mover, detach_from, dock_to, target_cell, config):
    """Search for a working slide op; return (op, outcome) or None."""
    discon, _kind = find_connection(tree, mover, detach_from)
    riders = tree.descendants(mover)
    cycle = [mover, detach_from, dock_to]
    tx, ty = cell_center(*target_cell)
    for ex in tree.free_edges(mover):
        for eq in tree.free_edges(dock_to):
            con = Connection(mover, ex, dock_to, eq)
            try:
                plan = plan_alignment(tree, con, set(cycle))
            except Exception:
                continue
            for perm in itertools.permutations(cycle):
                pre = tuple(
                    MorphTarget(m, plan.thetas[m], i) for i, m in enumerate(perm)
                )
                post = tuple(
                    MorphTarget(m, tree.modules[m].theta, i)
                    for i, m in enumerate(perm)
                )
                op = MorphPivotOp(con, discon, pre, post)
                try:
                    out = morphpivot(tree, op, config)
                except Exception:
                    continue
                if not out.ok or check_invariants(out.tree):
                    continue
                cx, cy = module_center(out.tree, mover)
                if math.hypot(cx - tx, cy - ty) > 1e-6:
                    continue
                if riders != out.tree.descendants(mover):
                    continue
                return op, out
    return None


def try_reanchor(tree, mover, detach_from, dock_to, config):
    """A pivot whose edges already coincide: no morphing at all."""
    discon, _kind = find_connection(tree, mover, detach_from)
    for ex in tree.free_edges(mover):
        for eq in tree.free_edges(dock_to):
            pos, ang = docking_offsets(tree, (mover, ex), (dock_to, eq))
            if pos > 1e-9 or ang > 1e-9:
                continue
            op = MorphPivotOp(Connection(mover, ex, dock_to, eq), discon)
            out = morphpivot(tree, op, config)
            if out.ok and not check_invariants(out.tree):
                return op, out
    return None


def main():
    with open(os.path.join(SCENARIOS, "mu.yaml")) as fh:
        doc = parse_scenario(fh.read())
    tree = scenario_to_ktree(doc)
    config = doc.defaults.config()

    plan = [
        ("slide", "M6", "M5", "M4", (2, 1)),   # tail tip up the side of M5-M4
        ("slide", "M5", "M4", "M6", (2, 0)),   # tail base east under M4-M6
        ("reanchor", "M6", "M4", "M2", None),  # hand the tail column to M2
        ("slide", "M6", "M2", "M3", (3, 1)),   # tail column east under M2-M3
    ]

    ops = []
    for step, (kind, mover, detach_from, dock_to, cell) in enumerate(plan):
        if kind == "slide":
            found = try_slide(tree, mover, detach_from, dock_to, cell, config)
        else:
            found = try_reanchor(tree, mover, detach_from, dock_to, config)
        if found is None:
            raise SystemExit(f"step {step}: no feasible op for {mover}")
        op, out = found
        ops.append(op)
        tree = out.tree
        print(f"step {step}: {mover} {detach_from}->{dock_to} ok, "
              f"con={op.new_con} pre={[(t.module, round(math.degrees(t.theta),3), t.order) for t in op.pre_morph]}")

    adjacency = {
        frozenset((c.module_a, c.module_b)) for c, _k in tree.all_connections()
    }
    with open(os.path.join(SCENARIOS, "f_target.yaml")) as fh:
        target = parse_scenario(fh.read())
    want = {frozenset((c.module_a, c.module_b)) for c in target.connections}
    print("final adjacency matches target:", adjacency == want)
    if adjacency != want:
        raise SystemExit(f"got {sorted(map(sorted, adjacency))}")

    out_path = os.path.join(SCENARIOS, "mu_to_f.yaml")
    header = (
        "# Reconfiguration script: horizontally placed mu -> horizontally\n"
        "# placed F, four morphpivots. Generated by tools/author_mu_to_f.py\n"
        "# and validated end-to-end (docking, collisions, invariants).\n"
    )
    with open(out_path, "w") as fh:
        fh.write(header + serialize_script(ops))
    print("wrote", out_path)


if __name__ == "__main__":
    main()
