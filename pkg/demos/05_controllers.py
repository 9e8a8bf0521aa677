"""Controller comparison: pure pursuit vs lateral MPC, and an MPPI lap.

Reproduces the cross-track-error contrast between the geometric and the
predictive controller on the banked oval, then lets the sampling controller
drive the same track end to end.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from racestack.harness.loop import run_scenario
from racestack.harness.metrics import compute_metrics
from racestack.harness.scenario import (
    ControllersSpec,
    EgoSpec,
    RaceSpec,
    RacelineSpec,
    Scenario,
)

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)


def lap_scenario(lateral, longitudinal="pid", mppi=None):
    return Scenario(
        name=f"demo-{lateral}", duration_s=45.0, seed=9,
        ego=EgoSpec(start_s=0.0, start_speed=22.0),
        raceline=RacelineSpec(v_cap=40.0, a_lat_max=7.0, a_acc_max=4.0,
                              a_brk_max=7.0),
        race=RaceSpec(v_max_operator=26.0),
        controllers=ControllersSpec(lateral=lateral, longitudinal=longitudinal,
                                    mppi=mppi or {}))


fig, axes = plt.subplots(1, 2, figsize=(12, 4.5))
for lateral, style in (("pure_pursuit", "b-"), ("lmpc", "g-")):
    log = run_scenario(lap_scenario(lateral))
    m = compute_metrics(log)
    frames = [f for f in log.frames if f.t > 5.0]
    d = [f.frenet["d_truth"] for f in frames]
    v = [f.ego["v_x"] for f in frames]
    print(f"{lateral}: cross-track range [{min(d):.3f}, {max(d):.3f}] m")
    axes[0].scatter(v, d, s=2, label=lateral)
    axes[1].scatter([f.a_y for f in frames], [f.a_x for f in frames], s=2,
                    label=lateral)
axes[0].set_xlabel("v (m/s)")
axes[0].set_ylabel("cross-track error (m)")
axes[0].legend()
axes[0].set_title("tracking vs speed")
axes[1].set_xlabel("a_y (m/s^2)")
axes[1].set_ylabel("a_x (m/s^2)")
axes[1].legend()
axes[1].set_title("GG diagram")
fig.tight_layout()
fig.savefig(OUT / "05_pp_vs_lmpc.png", dpi=120)
plt.close(fig)

log = run_scenario(lap_scenario("mppi", "mppi", {"model": "kinematic"}))
m = compute_metrics(log)
print(f"mppi lap: cross-track range [{m.cte_min:.3f}, {m.cte_max:.3f}] m, "
      f"mean tick {m.lap_metrics['tick_wall_ms_mean']:.2f} ms")
fig, ax = plt.subplots(figsize=(7, 6))
ax.plot(*log.track.outer_boundary.T, "k-", lw=0.7)
ax.plot(*log.track.inner_boundary.T, "k-", lw=0.7)
xs = [f.ego["x"] for f in log.frames]
ys = [f.ego["y"] for f in log.frames]
vs = [f.ego["v_x"] for f in log.frames]
sc = ax.scatter(xs, ys, c=vs, s=2, cmap="viridis")
fig.colorbar(sc, ax=ax, label="v (m/s)")
ax.set_aspect("equal")
ax.set_title("MPPI driving the oval")
fig.tight_layout()
fig.savefig(OUT / "05_mppi_lap.png", dpi=120)
print(f"figures in {OUT}")
