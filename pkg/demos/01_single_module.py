"""A single module up close: edge frames, footprint, relabeling.

Walks the folding range, checks the edge frames against the rhombus
vertices, and renders a strip of footprints.
"""

import math
import os

from rhombot import ModuleState, Pose2, edge_transform, footprint, remap_sigma
from rhombot.kinematics import ModuleParams, relabel_frame
from rhombot.render_svg import frame_svg
from rhombot.engine import SimFrame

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)
deg = math.radians

params = ModuleParams()  # a = 0.14 m, folding angle 45..135 deg
print(f"module: side {2 * params.a} m, theta in "
      f"[{math.degrees(params.theta_min):.0f}, {math.degrees(params.theta_max):.0f}] deg")

# Edge frames across the folding range. E2 never rotates (it stays parallel
# to the base edge); E1 and E3 counter-rotate with sigma.
print("\n theta   E1 midpoint          E2 midpoint          E3 midpoint")
for theta_deg in (45, 60, 90, 120, 135):
    st = ModuleState("M", deg(theta_deg), 0, params)
    row = [f"{theta_deg:6.0f}"]
    for k in (1, 2, 3):
        t = edge_transform(st, k)
        row.append(f"({t.x:+.3f}, {t.y:+.3f})    ")
    print(" ".join(row))

# The footprint stays a rhombus of side 2a no matter the angle.
for theta_deg in (45, 90, 135):
    st = ModuleState("M", deg(theta_deg))
    v = footprint(st).vertices
    sides = [math.dist(v[i], v[(i + 1) % 4]) for i in range(4)]
    assert max(sides) - min(sides) < 1e-12
print("\nall four side lengths stay equal to 2a across the range")

# Relabeling: making E1 the new reference edge flips sigma to its
# supplement but never moves the physical vertices.
st = ModuleState("M", deg(75))
moved = remap_sigma(st, 1)
print(f"sigma {math.degrees(st.sigma):.0f} deg -> relabeled through E1: "
      f"{math.degrees(moved.sigma):.0f} deg, theta stays {math.degrees(moved.theta):.0f} deg")
same = sorted(footprint(moved, relabel_frame(st, 1)).vertices)
assert all(math.dist(a, b) < 1e-12 for a, b in zip(same, sorted(footprint(st).vertices)))

# Render a fold strip: one SVG with five poses side by side.
frames = {}
poses = {}
for i, theta_deg in enumerate((45, 67.5, 90, 112.5, 135)):
    mid = f"{theta_deg:g}"
    frames[mid] = ModuleState(mid, deg(theta_deg)).sigma
    poses[mid] = Pose2(0.0, i * 0.75, 0.0)
strip = SimFrame(0.0, "state", frames, poses, ())
svg = frame_svg(strip, {mid: params for mid in frames}, title="folding range")
path = os.path.join(OUT, "fold_strip.svg")
with open(path, "w") as fh:
    fh.write(svg)
print(f"wrote {path}")
