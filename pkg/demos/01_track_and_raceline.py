"""Track geometry and raceline optimization walkthrough.

Builds the two bundled track fixtures, runs the curvature-minimizing raceline
solver on each, attaches speed profiles, and plots the maps alongside the
curvature and speed traces. Outputs land in demos/output/.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from racestack.track import centerline_raceline, min_curvature_raceline, speed_profile
from racestack.tracks import make_oval, make_road_course

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

for name, track, margin in (("oval", make_oval(), 1.5),
                            ("road_course", make_road_course(), 1.0)):
    base = centerline_raceline(track)
    line = min_curvature_raceline(track, margin=margin)
    line = speed_profile(line, v_cap=40.0, a_lat_max=7.0, a_acc_max=4.0,
                         a_brk_max=8.0)

    print(f"{name}: length {line.length:.0f} m, "
          f"sum kappa^2 centerline {np.sum(base.curvature**2):.4f} -> "
          f"raceline {np.sum(line.curvature**2):.4f}, "
          f"speeds {line.v.min():.1f}..{line.v.max():.1f} m/s")

    fig, axes = plt.subplots(1, 3, figsize=(15, 4.5))
    axes[0].plot(*track.outer_boundary.T, "k-", lw=0.8)
    axes[0].plot(*track.inner_boundary.T, "k-", lw=0.8)
    axes[0].plot(base.x, base.y, "b--", lw=0.8, label="centerline")
    sc = axes[0].scatter(line.x, line.y, c=line.v, s=2, cmap="viridis",
                         label="raceline")
    fig.colorbar(sc, ax=axes[0], label="v (m/s)")
    axes[0].set_aspect("equal")
    axes[0].legend(loc="upper right", fontsize=8)
    axes[0].set_title(f"{name}: optimized line")

    axes[1].plot(base.s, base.curvature, "b--", lw=0.8, label="centerline")
    axes[1].plot(line.s, line.curvature, "g-", lw=1.0, label="raceline")
    axes[1].set_xlabel("s (m)")
    axes[1].set_ylabel("curvature (1/m)")
    axes[1].legend(fontsize=8)
    axes[1].set_title("curvature reduction")

    axes[2].plot(line.s, line.v, "g-")
    axes[2].set_xlabel("s (m)")
    axes[2].set_ylabel("v (m/s)")
    axes[2].set_title("speed profile (lateral + accel/brake limits)")
    fig.tight_layout()
    fig.savefig(OUT / f"01_{name}.png", dpi=120)
    plt.close(fig)

print(f"figures in {OUT}")
