"""Head-to-head Follow mode: gap control against a scripted leader.

Runs the bundled ACC scenario and plots the curvilinear gap converging to the
target separation together with the pedal commands the gap controller
produced while closing in.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from racestack.harness import load_scenario, run_scenario

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

scenario = load_scenario(Path(__file__).parent.parent / "scenarios" / "acc_follow.yaml")
log = run_scenario(scenario)
frames = log.frames
t = np.array([f.t for f in frames])
gap = np.array([np.nan if f.gap is None else f.gap for f in frames])
throttle = np.array([f.cmd["throttle"] for f in frames])
brake = np.array([f.cmd["brake"] for f in frames])

print(f"gap converges to {np.nanmean(gap[t > 35]):.2f} m "
      f"(target {scenario.race.acc['d_0']} m)")

fig, axes = plt.subplots(2, 1, figsize=(10, 6), sharex=True)
axes[0].plot(t, gap, "k-")
axes[0].axhline(scenario.race.acc["d_0"], color="g", ls="--",
                label="target separation")
axes[0].set_ylabel("curvilinear gap (m)")
axes[0].legend(fontsize=8)
axes[1].plot(t, throttle, label="throttle")
axes[1].plot(t, brake, label="brake")
axes[1].set_xlabel("t (s)")
axes[1].set_ylabel("normalized command")
axes[1].legend(fontsize=8)
fig.tight_layout()
fig.savefig(OUT / "06_acc_follow.png", dpi=120)
print(f"figure in {OUT}")
