"""Radar opponent pipeline, stage by stage.

Synthesizes one radar frame containing the opponent cluster, wall clutter and
a multipath ghost, then walks it through quality thresholding, static-return
removal, clustering and boundary gating. A second section runs the tracking
filter against a moving opponent and plots estimate-vs-truth position and
speed, Fig.-style.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from racestack.perception import (
    OpponentTracker,
    RadarConfig,
    dbscan,
    gate_clusters,
    quality_filter,
    radar_features,
    simulate_radar,
    static_filter,
)
from racestack.tracks import make_oval
from racestack.vehicle import VehicleState

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

track = make_oval()
cfg = RadarConfig()
rng = np.random.default_rng(8)
ego = VehicleState(x=40.0, y=0.0, yaw=0.0, v_x=20.0, omega=np.full(4, 66.7))
opp = VehicleState(x=110.0, y=1.0, yaw=0.0, v_x=16.0, omega=np.full(4, 53.3))

points = simulate_radar(ego, opp, track, cfg, rng)
kept_q = quality_filter(points, cfg.thresholds)
kept_s = static_filter(kept_q, np.array([ego.v_x, ego.v_y]), cfg.eps_static)
labels = dbscan(radar_features(kept_s, cfg.v_r_scale), cfg.dbscan_eps,
                cfg.dbscan_min_pts)
detections = gate_clusters(kept_s, labels, ego, track, cfg, 0.0)
print(f"raw {len(points)} -> quality {len(kept_q)} -> dynamic {len(kept_s)}"
      f" -> clusters {len(set(labels) - {-1})} -> gated {len(detections)}")
for d in detections:
    print(f"  detection at ({d.centroid[0]:.1f}, {d.centroid[1]:.1f}), "
          f"speed {d.velocity:.1f} m/s, {d.point_count} points")

fig, ax = plt.subplots(figsize=(7, 6))
xy = np.array([p.position[:2] for p in points]) + [ego.x, ego.y]
ax.scatter(xy[:, 0], xy[:, 1], c=[p.v_r for p in points], cmap="coolwarm",
           s=12, label="raw returns")
ax.plot(*track.outer_boundary.T, "k-", lw=0.7)
ax.plot(*track.inner_boundary.T, "k-", lw=0.7)
for d in detections:
    ax.plot(d.centroid[0], d.centroid[1], "g*", ms=16, label="gated detection")
ax.plot(opp.x, opp.y, "ko", ms=8, mfc="none", label="opponent truth")
ax.set_xlim(ego.x - 20, ego.x + 120)
ax.set_ylim(-45, 45)
ax.legend(fontsize=8, loc="upper left")
ax.set_title("one radar frame (color = radial velocity)")
fig.tight_layout()
fig.savefig(OUT / "04_radar_frame.png", dpi=120)
plt.close(fig)

# tracking run
tracker = OpponentTracker(cfg)
truth_trace, est_trace, v_pairs = [], [], []
dt = 0.05
for k in range(200):
    ego = VehicleState(x=30.0 + 18.0 * dt * k, y=0.0, yaw=0.0, v_x=18.0,
                       omega=np.full(4, 60.0))
    opp = VehicleState(x=95.0 + 15.0 * dt * k, y=0.5, yaw=0.0, v_x=15.0,
                       omega=np.full(4, 50.0))
    pts = simulate_radar(ego, opp, track, cfg, rng)
    tracker.process(pts, ego, track, dt * k, dt)
    if tracker.track is not None:
        truth_trace.append((opp.x, opp.y, opp.v_x))
        est_trace.append((*tracker.track.pose[:2], tracker.track.v_smoothed))
truth_trace = np.array(truth_trace)
est_trace = np.array(est_trace)
pos_err = np.linalg.norm(truth_trace[:, :2] - est_trace[:, :2], axis=1)
vel_err = est_trace[:, 2] - truth_trace[:, 2]
print(f"tracking: distance error {pos_err.mean():.2f} +/- {pos_err.std():.2f} m, "
      f"velocity error {vel_err.mean():.3f} +/- {vel_err.std():.3f} m/s")

fig, axes = plt.subplots(1, 2, figsize=(12, 4))
axes[0].plot(truth_trace[:, 0], truth_trace[:, 1], "k-", label="truth")
axes[0].plot(est_trace[:, 0], est_trace[:, 1], "r--", label="track")
axes[0].legend(fontsize=8)
axes[0].set_title("opponent position")
axes[1].plot(truth_trace[:, 2], "k-", label="truth")
axes[1].plot(est_trace[:, 2], "r--", label="smoothed estimate")
axes[1].set_ylim(10, 20)
axes[1].legend(fontsize=8)
axes[1].set_title("opponent speed")
fig.tight_layout()
fig.savefig(OUT / "04_tracking.png", dpi=120)
print(f"figures in {OUT}")
