"""Ground-truth plant: kinematic and dynamic single-track models with banking.

The dynamic model uses linear per-axle lateral tires saturated at mu*Fz, a
longitudinal slip curve with a post-peak falloff (so locked wheels brake worse
than slip-controlled ones), and per-wheel rotational dynamics driven by brake
and drivetrain torques. Banking enters the lateral force balance as an
additive g*sin(phi) term. All steps are pure state transitions, safe for
parallel rollout evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError

G = 9.81
V_MIN_MODEL = 3.0   # below this the dynamic model is singular; use kinematics
EPS_V = 0.1         # slip-ratio guard speed
RADPS_TO_RPM = 60.0 / (2.0 * np.pi)


@dataclass(frozen=True)
class VehicleParams:
    """Synthetic single-track parameters (not calibrated to any real car)."""

    m: float = 750.0                 # kg
    i_z: float = 1100.0              # yaw inertia, kg m^2
    l_f: float = 1.6                 # CG to front axle, m
    l_r: float = 1.4                 # CG to rear axle, m
    c_f: float = 150_000.0           # front axle cornering stiffness, N/rad
    c_r: float = 190_000.0           # rear axle cornering stiffness, N/rad
    wheel_radius: float = 0.30       # m
    mu: float = 1.0                  # friction coefficient
    gear_ratios: tuple = (12.0, 8.64, 6.22, 4.48, 3.23, 2.32)
    rpm_upshift: float = 6200.0
    rpm_downshift: float = 3000.0
    a_brk_max: float = 9.0           # m/s^2, used for speed profiling
    steer_max: float = 0.35          # rad
    torque_max: float = 380.0        # N m at the crank
    brake_torque_max: float = 1300.0  # N m per wheel at full pressure
    wheel_inertia: float = 1.4       # kg m^2 per wheel
    c_drag: float = 0.9              # N s^2/m^2
    c_roll: float = 0.012
    engine_brake: float = 2.0        # N m per (rpm/1000)^2 at closed throttle
    # longitudinal slip curve mu(lambda) = s*(b1*(1-exp(-b2 l)) - b3*l)
    slip_b1: float = 1.05
    slip_b2: float = 35.0
    slip_b3: float = 0.25

    def __post_init__(self):
        if min(self.m, self.i_z, self.l_f, self.l_r, self.c_f, self.c_r,
               self.wheel_radius, self.mu, self.a_brk_max) <= 0:
            raise ConfigurationError("vehicle parameters must be positive")
        if self.rpm_downshift >= self.rpm_upshift:
            raise ConfigurationError("rpm_downshift must be below rpm_upshift")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r

    @property
    def f_z_front(self) -> float:
        return self.m * G * self.l_r / self.wheelbase

    @property
    def f_z_rear(self) -> float:
        return self.m * G * self.l_f / self.wheelbase


@dataclass
class VehicleState:
    """Planar body state plus wheel speeds and drivetrain state.

    Wheel order: front-left, front-right, rear-left, rear-right.
    """

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0
    v_x: float = 0.0
    v_y: float = 0.0
    r: float = 0.0
    omega: np.ndarray = field(default_factory=lambda: np.zeros(4))
    gear: int = 0
    rpm: float = 0.0

    def copy(self) -> "VehicleState":
        return replace(self, omega=self.omega.copy())


@dataclass(frozen=True)
class ControlCommand:
    steering: float = 0.0
    throttle: float = 0.0
    brake: float = 0.0
    gear_request: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.throttle <= 1.0 and 0.0 <= self.brake <= 1.0):
            raise ConfigurationError("throttle and brake must lie in [0, 1]")


def slip_ratio(v_veh: float, omega: float, radius: float) -> float:
    """lambda = (V - omega*R)/V, zero below the low-speed guard."""
    if v_veh <= EPS_V:
        return 0.0
    return (v_veh - omega * radius) / v_veh


def slip_angles(state: VehicleState, steering: float,
                params: VehicleParams) -> tuple[float, float]:
    """Front and rear axle slip angles (rad)."""
    alpha_f = steering - np.arctan2(state.v_y + params.l_f * state.r, state.v_x)
    alpha_r = -np.arctan2(state.v_y - params.l_r * state.r, state.v_x)
    return float(alpha_f), float(alpha_r)


def rpm_from_speed(v_x: float, gear: int, params: VehicleParams) -> float:
    omega_wheel = max(v_x, 0.0) / params.wheel_radius
    return omega_wheel * params.gear_ratios[gear] * RADPS_TO_RPM


def engine_torque(rpm: float, params: VehicleParams) -> float:
    """Flat-top synthetic torque curve; only the monotone region matters."""
    t = params.torque_max
    if rpm < 1000.0:
        return 0.45 * t
    if rpm < 3000.0:
        return (0.45 + 0.55 * (rpm - 1000.0) / 2000.0) * t
    if rpm <= 6500.0:
        return t
    return max(0.0, 1.0 - 0.3 * (rpm - 6500.0) / 1000.0) * t


def drivetrain_step(gear: int, rpm: float, throttle: float,
                    params: VehicleParams) -> float:
    """Drive force at the rear axle contact patches, N."""
    ratio = params.gear_ratios[gear]
    return throttle * engine_torque(rpm, params) * ratio / params.wheel_radius


def gear_shift(rpm: float, gear: int, params: VehicleParams) -> int:
    if rpm > params.rpm_upshift and gear < len(params.gear_ratios) - 1:
        return gear + 1
    if rpm < params.rpm_downshift and gear > 0:
        return gear - 1
    return gear


def _mu_long(lam: np.ndarray, params: VehicleParams) -> np.ndarray:
    """Normalized longitudinal friction vs |slip|, peak scaled to params.mu."""
    b1, b2, b3 = params.slip_b1, params.slip_b2, params.slip_b3
    lam_peak = np.log(b1 * b2 / b3) / b2
    peak = b1 * (1.0 - np.exp(-b2 * lam_peak)) - b3 * lam_peak
    raw = b1 * (1.0 - np.exp(-b2 * lam)) - b3 * lam
    return params.mu * raw / peak


def _mu_long_slope(lam: np.ndarray, params: VehicleParams) -> np.ndarray:
    b1, b2, b3 = params.slip_b1, params.slip_b2, params.slip_b3
    lam_peak = np.log(b1 * b2 / b3) / b2
    peak = b1 * (1.0 - np.exp(-b2 * lam_peak)) - b3 * lam_peak
    return params.mu * (b1 * b2 * np.exp(-b2 * lam) - b3) / peak


def kinematic_step(state: VehicleState, cmd: ControlCommand, a_x: float,
                   dt: float, params: VehicleParams) -> VehicleState:
    """RK4 step of the kinematic bicycle (yaw rate = v*tan(delta)/L)."""
    if not 0.0 < dt <= 0.05:
        raise ConfigurationError("dt must lie in (0, 0.05]")
    delta = np.clip(cmd.steering, -params.steer_max, params.steer_max)
    wheelbase = params.wheelbase

    def deriv(q):
        x, y, yaw, v = q
        return np.array([
            v * np.cos(yaw),
            v * np.sin(yaw),
            v * np.tan(delta) / wheelbase,
            a_x,
        ])

    q = np.array([state.x, state.y, state.yaw, state.v_x])
    k1 = deriv(q)
    k2 = deriv(q + 0.5 * dt * k1)
    k3 = deriv(q + 0.5 * dt * k2)
    k4 = deriv(q + dt * k3)
    q = q + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    v_new = max(q[3], 0.0)
    r_new = v_new * np.tan(delta) / wheelbase
    out = state.copy()
    out.x, out.y, out.yaw, out.v_x = float(q[0]), float(q[1]), float(q[2]), float(v_new)
    out.v_y = 0.0
    out.r = float(r_new)
    out.omega = np.full(4, v_new / params.wheel_radius)
    out.rpm = rpm_from_speed(v_new, out.gear, params)
    return out


def _axle_forces(state, delta, brake_per_wheel, throttle, params):
    """Per-wheel longitudinal forces, axle lateral forces and wheel torques."""
    v_x = max(state.v_x, EPS_V)
    lam = np.array([slip_ratio(state.v_x, w, params.wheel_radius)
                    for w in state.omega])
    f_z_wheel = np.array([params.f_z_front, params.f_z_front,
                          params.f_z_rear, params.f_z_rear]) / 2.0
    f_x = -np.sign(lam) * _mu_long(np.abs(lam), params) * f_z_wheel

    alpha_f, alpha_r = slip_angles(state, delta, params)
    f_yf = params.c_f * alpha_f
    f_yr = params.c_r * alpha_r
    # friction circle: longitudinal usage shrinks the lateral capacity
    fx_front = f_x[0] + f_x[1]
    fx_rear = f_x[2] + f_x[3]
    cap_f = np.sqrt(max((params.mu * params.f_z_front) ** 2 - fx_front ** 2, 1e-6))
    cap_r = np.sqrt(max((params.mu * params.f_z_rear) ** 2 - fx_rear ** 2, 1e-6))
    f_yf = float(np.clip(f_yf, -cap_f, cap_f))
    f_yr = float(np.clip(f_yr, -cap_r, cap_r))

    # wheel torques: drive and engine braking on the rear axle, brakes on all
    drive_force = drivetrain_step(state.gear, state.rpm, throttle, params)
    t_drive = drive_force * params.wheel_radius / 2.0
    t_engine = -params.engine_brake * (state.rpm / 1000.0) ** 2 \
        * params.gear_ratios[state.gear] * (1.0 - throttle) / 2.0
    t_brake = brake_per_wheel * params.brake_torque_max
    spin_dir = np.clip(state.omega / 0.5, -1.0, 1.0)
    t_wheel = np.array([0.0, 0.0, t_drive + t_engine, t_drive + t_engine]) \
        - t_brake * spin_dir
    return lam, f_x, f_yf, f_yr, t_wheel, f_z_wheel


def dynamic_step(state: VehicleState, cmd: ControlCommand, banking: float,
                 dt: float, params: VehicleParams,
                 brake_per_wheel: np.ndarray | None = None,
                 n_sub: int = 4) -> VehicleState:
    """One plant step of the dynamic single-track model.

    ``brake_per_wheel`` overrides ``cmd.brake`` with individual normalized
    pressures (the ABS path); otherwise the command brake applies to all four
    wheels. Falls back to the kinematic model below V_MIN_MODEL.
    """
    if not 0.0 < dt <= 0.05:
        raise ConfigurationError("dt must lie in (0, 0.05]")
    delta = float(np.clip(cmd.steering, -params.steer_max, params.steer_max))
    brakes = np.full(4, cmd.brake) if brake_per_wheel is None \
        else np.asarray(brake_per_wheel, dtype=float)

    gear = cmd.gear_request if cmd.gear_request is not None else state.gear
    gear = int(np.clip(gear, 0, len(params.gear_ratios) - 1))

    if state.v_x < V_MIN_MODEL:
        # force balance without slip dynamics
        drive = drivetrain_step(gear, rpm_from_speed(state.v_x, gear, params),
                                cmd.throttle, params)
        drive = min(drive, params.mu * params.f_z_rear)
        f_brake = float(np.sum(brakes)) * params.brake_torque_max / params.wheel_radius
        f_brake = min(f_brake, params.mu * params.m * G)
        resist = params.c_roll * params.m * G if state.v_x > 0.05 else 0.0
        a_x = (drive - f_brake - resist - params.c_drag * state.v_x ** 2) / params.m
        out = kinematic_step(state, cmd, a_x, dt, params)
        out.gear = gear
        out.rpm = rpm_from_speed(out.v_x, gear, params)
        return out

    q = state.copy()
    q.gear = gear
    dt_sub = dt / n_sub
    for _ in range(n_sub):
        q.rpm = rpm_from_speed(q.v_x, q.gear, params)
        lam, f_x, f_yf, f_yr, t_wheel, f_z_wheel = _axle_forces(
            q, delta, brakes, cmd.throttle, params)
        fx_front = f_x[0] + f_x[1]
        fx_total = float(np.sum(f_x))
        drag = params.c_drag * q.v_x ** 2 + params.c_roll * params.m * G

        a_vx = (fx_total - drag) / params.m + q.r * q.v_y
        a_vy = (f_yf * np.cos(delta) + fx_front * np.sin(delta) + f_yr) / params.m \
            + G * np.sin(banking) - q.r * q.v_x
        a_r = (params.l_f * (f_yf * np.cos(delta) + fx_front * np.sin(delta))
               - params.l_r * f_yr) / params.i_z

        q.x += (q.v_x * np.cos(q.yaw) - q.v_y * np.sin(q.yaw)) * dt_sub
        q.y += (q.v_x * np.sin(q.yaw) + q.v_y * np.cos(q.yaw)) * dt_sub
        q.yaw += q.r * dt_sub
        q.v_x = max(q.v_x + a_vx * dt_sub, 0.0)
        q.v_y += a_vy * dt_sub
        q.r += a_r * dt_sub

        # semi-implicit wheel update: linearize the tire force in omega so the
        # stiff wheel dynamics stay stable at the plant step size
        v_ref = max(q.v_x, EPS_V)
        slope = _mu_long_slope(np.abs(lam), params) * f_z_wheel
        f_omega = slope * params.wheel_radius / v_ref
        denom = np.maximum(params.wheel_inertia / dt_sub + params.wheel_radius * f_omega,
                           params.wheel_inertia / dt_sub * 0.1)
        d_omega = (t_wheel - params.wheel_radius * f_x) / denom
        q.omega = np.maximum(q.omega + d_omega, 0.0)

    q.rpm = rpm_from_speed(q.v_x, q.gear, params)
    return q


def body_accelerations(prev: VehicleState, new: VehicleState,
                       dt: float) -> tuple[float, float]:
    """Body-frame accelerations (what an IMU at the CG measures, minus g)."""
    a_x = (new.v_x - prev.v_x) / dt - prev.r * prev.v_y
    a_y = (new.v_y - prev.v_y) / dt + prev.r * prev.v_x
    return float(a_x), float(a_y)
