"""Drive physics: torque margin, cable length, stroke hysteresis.

Reproduces the characteristic curves of the single-DoF drive: where the
actuation torque clears the connector's resistance (single-sided
disconnection), how the cable shortens as the module folds open, and the
offset between forward and reverse servo strokes.
"""

import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from rhombot.actuation import (
    ActuationParams,
    StrokeCounter,
    actuation_torque,
    cable_length,
    disconnect_threshold,
    hysteresis_angle_deg,
    resisting_torque,
    stroke_counts,
)

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)
deg = math.radians
A = 0.14
p = ActuationParams()

theta = np.linspace(deg(45), deg(135), 200)
md = [actuation_torque(p, A, t) for t in theta]
mf = resisting_torque(p, A)
star = disconnect_threshold(p, A)
print(f"resisting torque {mf:.3f} N*m; drive wins above "
      f"{math.degrees(star):.2f} deg of folding angle")

fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))
axes[0].plot(np.degrees(theta), md, label="drive torque")
axes[0].axhline(mf, color="tab:red", ls="--", label="connector resistance")
axes[0].axvline(math.degrees(star), color="gray", ls=":")
axes[0].set_xlabel("folding angle [deg]")
axes[0].set_ylabel("torque [N m]")
axes[0].legend()
axes[0].set_title("single-sided disconnection margin")

cable = [cable_length(A, t) for t in theta]
axes[1].plot(np.degrees(theta), np.array(cable) * 1000)
axes[1].set_xlabel("folding angle [deg]")
axes[1].set_ylabel("cable length [mm]")
axes[1].set_title("cable length (diagonal profile)")

# forward and reverse stroke curves, offset by the hysteresis counts
grid = np.linspace(deg(46), deg(134), 60)
fwd_counter = StrokeCounter(p, A)
fwd_counter.stroke(deg(45.5), deg(46))  # establish forward direction
fwd = np.cumsum([0] + [
    stroke_counts(p, A, a, b) for a, b in zip(grid, grid[1:])
])
rev = fwd + p.hysteresis_counts
axes[2].plot(np.degrees(grid), fwd, label="forward (opening)")
axes[2].plot(np.degrees(grid), rev, label="reverse (closing)")
axes[2].set_xlabel("folding angle [deg]")
axes[2].set_ylabel("servo stroke [counts]")
axes[2].legend()
axes[2].set_title(
    f"stroke hysteresis: {p.hysteresis_counts:.0f} counts "
    f"= {hysteresis_angle_deg(p):.1f} deg"
)

fig.tight_layout()
path = os.path.join(OUT, "actuation_curves.png")
fig.savefig(path, dpi=130)
print(f"wrote {path}")

# the stateful model pays the offset exactly once per direction change
counter = StrokeCounter(p, A)
legs = [(90, 120), (120, 100), (100, 110), (110, 90)]
for a, b in legs:
    counts = counter.stroke(deg(a), deg(b))
    print(f"stroke {a:>3} -> {b:>3} deg: {counts:8.1f} counts")
