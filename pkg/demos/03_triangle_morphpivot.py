"""One full morphpivot with three modules.

M2 and M3 hang off the root M1. Folding all three to 120 deg brings the
free edges of M2 and M3 together into a triangular ring; docking them,
releasing M1-M3 and folding back relocates M3 from above M1 to above M2
without ever detaching it from the structure.
"""

import math
import os

from rhombot.engine import MorphPivotOp, MorphTarget, morphpivot, plan_alignment
from rhombot.render_svg import export_frames
from rhombot.scenario_io import parse_scenario, scenario_to_ktree
from rhombot.topology import Connection

HERE = os.path.dirname(__file__)
OUT = os.path.join(HERE, "output", "triangle")
deg = math.radians

with open(os.path.join(HERE, "..", "scenarios", "triangle.yaml")) as fh:
    doc = parse_scenario(fh.read())
tree = scenario_to_ktree(doc)
print("tree:", {c: p for c, (p, _e) in tree.parent.items()})

# Where must the folding angles go so the two free edges coincide?
new_con = Connection("M2", 3, "M3", 1)
plan = plan_alignment(tree, new_con, {"M1", "M2", "M3"})
print("alignment targets:",
      {m: f"{math.degrees(t):.6f} deg" for m, t in plan.thetas.items()},
      f"(residual {plan.residual_norm:.1e})")

op = MorphPivotOp(
    new_con=new_con,
    new_discon=Connection("M1", 2, "M3", 0),
    pre_morph=tuple(
        MorphTarget(m, plan.thetas[m], i) for i, m in enumerate(("M1", "M2", "M3"))
    ),
    post_morph=tuple(
        MorphTarget(m, deg(90), i) for i, m in enumerate(("M1", "M2", "M3"))
    ),
)
outcome = morphpivot(tree, op, doc.defaults.config())
print(f"docking offsets: {outcome.report.pos_offset:.2e} m, "
      f"{outcome.report.ang_offset:.2e} rad -> "
      f"{'pass' if outcome.report.passed else 'fail'}")
print("tree after:", {c: p for c, (p, _e) in outcome.tree.parent.items()})

params = {mid: st.params for mid, st in outcome.tree.modules.items()}
written = export_frames(
    outcome.frames, OUT, params, root="M1", svg=True, stride=20
)
print(f"{len(outcome.frames)} frames; wrote {len(written)} files under {OUT}")

# the same pivot in reverse restores the original chain
mirror = MorphPivotOp(
    new_con=Connection("M1", 2, "M3", 3),
    new_discon=Connection("M2", 3, "M3", 0),
    pre_morph=op.pre_morph,
    post_morph=op.post_morph,
)
back = morphpivot(outcome.tree, mirror, doc.defaults.config())
print("mirror pivot restores:", {c: p for c, (p, _e) in back.tree.parent.items()})
