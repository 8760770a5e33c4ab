"""Seven-module reconfiguration: a lying "mu" walks into a lying "F".

Replays the checked-in four-pivot script, printing the docking report and
the adjacency after every step, and renders the shape at each boundary.
"""

import math
import os

from rhombot.engine import morphpivot
from rhombot.render_svg import tree_svg
from rhombot.scenario_io import parse_scenario, parse_script, scenario_to_ktree
from rhombot.topology import check_invariants

HERE = os.path.dirname(__file__)
OUT = os.path.join(HERE, "output", "mu_to_f")
os.makedirs(OUT, exist_ok=True)

with open(os.path.join(HERE, "..", "scenarios", "mu.yaml")) as fh:
    doc = parse_scenario(fh.read())
with open(os.path.join(HERE, "..", "scenarios", "mu_to_f.yaml")) as fh:
    ops = parse_script(fh.read())

tree = scenario_to_ktree(doc)
config = doc.defaults.config()


def adjacency(t):
    return sorted(
        tuple(sorted((c.module_a, c.module_b))) for c, _k in t.all_connections()
    )


def snapshot(name, t):
    path = os.path.join(OUT, name)
    with open(path, "w") as fh:
        fh.write(tree_svg(t, title=name))
    return path


print("start:", adjacency(tree))
snapshot("step0_mu.svg", tree)
for i, op in enumerate(ops, start=1):
    outcome = morphpivot(tree, op, config)
    assert outcome.ok, outcome.error
    tree = outcome.tree
    assert check_invariants(tree) == []
    print(f"pivot {i}: moved {op.new_con.module_a} onto {op.new_con.module_b}, "
          f"dock {outcome.report.pos_offset:.1e} m / "
          f"{math.degrees(outcome.report.ang_offset):.1e} deg, "
          f"{len(outcome.frames)} frames")
    print(f"  adjacency: {adjacency(tree)}")
    snapshot(f"step{i}.svg", tree)
print(f"wrote shape snapshots under {OUT}")
