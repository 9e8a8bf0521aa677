"""Plant model behaviors: kinematic circles, understeer balance, lock-up.

Shows the kinematic bicycle tracing its analytic circle, the dynamic model's
steady-state yaw rate against the bicycle formula, and why the ABS exists:
full-pressure braking locks the wheels and stops later than slip-controlled
braking.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from racestack.control import AbsController
from racestack.vehicle import (
    ControlCommand,
    VehicleParams,
    VehicleState,
    dynamic_step,
    kinematic_step,
    rpm_from_speed,
    slip_ratio,
)

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)
params = VehicleParams()

# kinematic circle
delta = 0.08
state = VehicleState(v_x=15.0, omega=np.full(4, 50.0), gear=3)
pts = []
for _ in range(2500):
    state = kinematic_step(state, ControlCommand(steering=delta), 0.0, 0.01,
                           params)
    pts.append((state.x, state.y))
pts = np.array(pts)
radius = params.wheelbase / np.tan(delta)
print(f"kinematic circle: expected radius {radius:.1f} m")

# steady-state yaw rate sweep
speeds = np.linspace(10, 45, 12)
ratios = []
for v in speeds:
    s = VehicleState(v_x=v, omega=np.full(4, v / 0.3), gear=4)
    s.rpm = rpm_from_speed(v, 4, params)
    for _ in range(400):
        s = dynamic_step(s, ControlCommand(steering=0.01), 0.0, 0.01, params)
    k_us = params.m * (params.l_r * params.c_r - params.l_f * params.c_f) / (
        params.c_f * params.c_r * params.wheelbase)
    r_formula = s.v_x * 0.01 / (params.wheelbase + k_us * s.v_x**2)
    ratios.append(s.r / r_formula)
print("yaw-rate ratio vs bicycle formula:",
      np.round(ratios, 3).tolist()[:5], "...")

# braking: locked wheels vs ABS
def brake_run(use_abs):
    s = VehicleState(v_x=40.0, omega=np.full(4, 40.0 / 0.3), gear=5)
    s.rpm = rpm_from_speed(40.0, 5, params)
    ctrl = AbsController() if use_abs else None
    xs, vs, lams = [], [], []
    while s.v_x > 3.0:
        lam = [slip_ratio(s.v_x, w, params.wheel_radius) for w in s.omega]
        brakes = ctrl.step(1.0, lam, 0.01) if ctrl else np.ones(4)
        s = dynamic_step(s, ControlCommand(brake=1.0), 0.0, 0.01, params,
                         brake_per_wheel=brakes)
        xs.append(s.x)
        vs.append(s.v_x)
        lams.append(lam[0])
    return np.array(xs), np.array(vs), np.array(lams)

x_abs, v_abs, lam_abs = brake_run(True)
x_lock, v_lock, lam_lock = brake_run(False)
print(f"stopping distance: ABS {x_abs[-1]:.1f} m, locked {x_lock[-1]:.1f} m")

fig, axes = plt.subplots(1, 3, figsize=(15, 4.5))
axes[0].plot(pts[:, 0], pts[:, 1], "b-")
axes[0].set_aspect("equal")
axes[0].set_title(f"kinematic circle (R = {radius:.1f} m)")
axes[1].plot(x_abs, v_abs, label="ABS")
axes[1].plot(x_lock, v_lock, label="locked")
axes[1].set_xlabel("distance (m)")
axes[1].set_ylabel("v (m/s)")
axes[1].legend()
axes[1].set_title("braking from 40 m/s")
axes[2].plot(lam_abs, label="ABS")
axes[2].plot(lam_lock, label="locked")
axes[2].set_xlabel("tick")
axes[2].set_ylabel("front slip ratio")
axes[2].legend()
axes[2].set_title("slip ratio under full brake request")
fig.tight_layout()
fig.savefig(OUT / "02_vehicle.png", dpi=120)
print(f"figure in {OUT}")
