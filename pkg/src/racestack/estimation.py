"""18-state error-state filter with robust residual weighting and GNSS failover.

The state stacks position, velocity, acceleration, orientation
(roll/pitch/yaw), angular velocity and angular acceleration (3 each). IMU
mechanization propagates the nominal state; covariance follows a
constant-derivative error model per chain. Measurement updates use an
information-form covariance update with an inverse-multi-quadratic residual
weight applied to the gain, which softens outlier measurements instead of
gating them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .geometry import wrap_angle
from .vehicle import VehicleParams

STATE_DIM = 18
POS = slice(0, 3)
VEL = slice(3, 6)
ACC = slice(6, 9)
ATT = slice(9, 12)     # roll, pitch, yaw
RATE = slice(12, 15)
AACC = slice(15, 18)
YAW = 11

GRAVITY = np.array([0.0, 0.0, -9.81])

GNSS_SOURCES = ("top", "side", "vectornav")
SILENCE_THRESHOLD = 0.5   # s without messages before a source is failed over
T_REHAB = 1.0             # s of continuous health before returning to top


@dataclass
class EstimatorState:
    x: np.ndarray
    cov: np.ndarray
    t: float = 0.0

    def copy(self) -> "EstimatorState":
        return EstimatorState(self.x.copy(), self.cov.copy(), self.t)

    @property
    def position(self) -> np.ndarray:
        return self.x[POS]

    @property
    def velocity(self) -> np.ndarray:
        return self.x[VEL]

    @property
    def yaw(self) -> float:
        return float(self.x[YAW])


@dataclass(frozen=True)
class GnssMeasurement:
    source: str
    position: np.ndarray
    velocity: np.ndarray | None
    valid: bool
    timestamp: float
    heading: float | None = None   # dual-antenna units report yaw


@dataclass(frozen=True)
class ImuMeasurement:
    specific_force: np.ndarray
    angular_rate: np.ndarray
    timestamp: float


@dataclass(frozen=True)
class WheelOdometry:
    wheel_speeds: np.ndarray
    steering_angle: float
    timestamp: float


def rotation_world_body(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Rz(yaw) Ry(pitch) Rx(roll)."""
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def imq_weight(residual, c: float) -> float:
    """Inverse-multi-quadratic weight (1 + ||r||^2/c^2)^(-1/2), in (0, 1]."""
    if c <= 0:
        raise ConfigurationError("IMQ soft threshold c must be positive")
    r2 = float(np.dot(np.atleast_1d(residual), np.atleast_1d(residual)))
    return 1.0 / np.sqrt(1.0 + r2 / c**2)


def soft_thresholds(v: float, omega: float, dt: float) -> tuple[float, float]:
    """Speed-scaled soft thresholds for position (m) and orientation (rad)."""
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    c_pos = max(0.75, min(3.0, abs(v) * dt))
    c_ori = max(np.pi / 36.0, min(np.pi / 18.0, abs(omega) * dt))
    return c_pos, c_ori


def transition_matrix(dt: float) -> np.ndarray:
    """Error dynamics of the mechanized nominal state.

    Only the position error integrates a stateful error (velocity). The
    velocity and attitude blocks are driven by the IMU, and the derivative
    blocks (acceleration, rates, angular acceleration) are overwritten from
    measurements at every predict, so their errors carry no memory; that
    noise enters through Q instead of cross couplings."""
    f = np.eye(STATE_DIM)
    f[0:3, 3:6] = np.eye(3) * dt       # position <- velocity
    return f


def process_noise(dt: float, q_diag: np.ndarray) -> np.ndarray:
    return np.diag(q_diag) * dt


def eskf_predict(est: EstimatorState, imu: ImuMeasurement, dt: float,
                 q_diag: np.ndarray) -> EstimatorState:
    """Propagate the nominal state with IMU mechanization and the covariance
    with the constant-derivative model."""
    if not 0.0 < dt <= 0.02:
        raise ConfigurationError("predict dt must lie in (0, 0.02]")
    x = est.x.copy()
    roll, pitch, yaw = x[ATT]
    rot = rotation_world_body(roll, pitch, yaw)
    a_world = rot @ np.asarray(imu.specific_force, dtype=float) + GRAVITY

    x[POS] = x[POS] + x[VEL] * dt + 0.5 * a_world * dt**2
    x[VEL] = x[VEL] + a_world * dt
    x[ACC] = a_world

    w = np.asarray(imu.angular_rate, dtype=float)
    sr, cr = np.sin(roll), np.cos(roll)
    tp, cp = np.tan(pitch), np.cos(pitch)
    euler_rates = np.array([
        w[0] + sr * tp * w[1] + cr * tp * w[2],
        cr * w[1] - sr * w[2],
        sr / cp * w[1] + cr / cp * w[2],
    ])
    x[AACC] = (w - x[RATE]) / dt
    x[ATT] = wrap_angle(x[ATT] + euler_rates * dt)
    x[RATE] = w

    f = transition_matrix(dt)
    cov = f @ est.cov @ f.T + process_noise(dt, q_diag)
    cov = 0.5 * (cov + cov.T)
    return EstimatorState(x, cov, est.t + dt)


def eskf_update(est: EstimatorState, z, h_mat: np.ndarray, r_noise: np.ndarray,
                c: float | None = None,
                residual: np.ndarray | None = None) -> EstimatorState:
    """Measurement update with the IMQ weight applied to the gain.

    Information form: Sigma^-1 <- Sigma^-1 + w^2 H' R^-1 H, then
    K = w^2 Sigma H' R^-1. ``c=None`` disables the weighting (w = 1).
    ``residual`` overrides z - Hx for nonlinear or angle-wrapped measurements.
    A singular information matrix raises numpy.linalg.LinAlgError.
    """
    h_mat = np.atleast_2d(np.asarray(h_mat, dtype=float))
    r_noise = np.atleast_2d(np.asarray(r_noise, dtype=float))
    if residual is None:
        residual = np.atleast_1d(np.asarray(z, dtype=float)) - h_mat @ est.x
    residual = np.atleast_1d(np.asarray(residual, dtype=float))

    w = 1.0 if c is None else imq_weight(residual, c)
    r_inv = np.linalg.inv(r_noise)
    info = np.linalg.inv(est.cov) + w**2 * h_mat.T @ r_inv @ h_mat
    cov = np.linalg.inv(info)
    cov = 0.5 * (cov + cov.T)
    gain = w**2 * cov @ h_mat.T @ r_inv

    x = est.x + gain @ residual
    x[ATT] = wrap_angle(x[ATT])
    return EstimatorState(x, cov, est.t)


def wheel_odometry_body_velocity(odo: WheelOdometry,
                                 params: VehicleParams) -> np.ndarray:
    """Pseudo body-frame velocity from rear wheel speeds and steering.

    v_x from the mean rear wheel speed; v_y from kinematic single-track
    side-slip at the CG, v_y = v_x * tan(delta) * l_r / L.
    """
    v_x = float(np.mean(odo.wheel_speeds[2:4])) * params.wheel_radius
    v_y = v_x * np.tan(odo.steering_angle) * params.l_r / params.wheelbase
    return np.array([v_x, v_y, 0.0])


def wheel_odometry_update(est: EstimatorState, odo: WheelOdometry,
                          params: VehicleParams, r_noise: np.ndarray,
                          c: float | None = None) -> EstimatorState:
    """Fuse the wheel-odometry pseudo-velocity in the body frame.

    The measurement model rotates the world velocity into the body frame, so
    its Jacobian couples the velocity block and yaw; the update therefore
    tightens heading as well as speed.
    """
    z = wheel_odometry_body_velocity(odo, params)
    yaw = est.yaw
    cy, sy = np.cos(yaw), np.sin(yaw)
    rot_t = np.array([[cy, sy, 0.0], [-sy, cy, 0.0], [0.0, 0.0, 1.0]])
    v_w = est.x[VEL]
    d_rot_t = np.array([[-sy, cy, 0.0], [-cy, -sy, 0.0], [0.0, 0.0, 0.0]])

    h_mat = np.zeros((3, STATE_DIM))
    h_mat[:, VEL] = rot_t
    h_mat[:, YAW] = d_rot_t @ v_w
    residual = z - rot_t @ v_w
    return eskf_update(est, z, h_mat, r_noise, c=c, residual=residual)


@dataclass
class FailoverState:
    active: str | None = "top"
    top_recovered_at: float | None = 0.0

    def copy(self):
        return FailoverState(self.active, self.top_recovered_at)


def _source_age(history: np.ndarray, t: float) -> float:
    if len(history) == 0:
        return np.inf
    past = history[history <= t + 1e-12]
    return np.inf if len(past) == 0 else float(t - past[-1])


def failover_step(state: FailoverState, histories: dict, t: float) -> FailoverState:
    """One evaluation of the failover machine at time t (in-order calls)."""
    out = state.copy()
    ages = {s: _source_age(np.asarray(histories.get(s, ())), t)
            for s in GNSS_SOURCES}
    top_healthy = ages["top"] < SILENCE_THRESHOLD

    if not top_healthy:
        out.top_recovered_at = None
    elif out.top_recovered_at is None:
        out.top_recovered_at = t

    if out.active == "top" and not top_healthy:
        out.active = next((s for s in GNSS_SOURCES[1:]
                           if ages[s] < SILENCE_THRESHOLD), None)
    elif out.active != "top":
        if top_healthy and out.top_recovered_at is not None \
                and (out.active is None or t - out.top_recovered_at >= T_REHAB):
            out.active = "top"
        elif out.active is not None and ages[out.active] >= SILENCE_THRESHOLD:
            out.active = next((s for s in GNSS_SOURCES[1:]
                               if ages[s] < SILENCE_THRESHOLD), None)
    return out


def gnss_failover(histories: dict, t: float, step: float = 0.01) -> tuple[str | None, bool]:
    """Active GNSS source at time t, replayed from the start of the history.

    A pure function of the per-source message timestamp histories: the
    internal machine is re-run over a uniform time grid, so repeated calls
    with the same history are replay-identical. Returns (active_source,
    dead_reckoning_flag).
    """
    state = FailoverState()
    for tk in np.arange(0.0, t + step / 2, step):
        state = failover_step(state, histories, tk)
    return state.active, state.active is None


@dataclass
class JerkMetrics:
    heading: float   # rad/s^3, mean absolute third difference
    position: float  # m/s^3

    @property
    def heading_deg(self) -> float:
        return float(np.degrees(self.heading))


def jerk_metrics(timestamps, positions, headings) -> JerkMetrics:
    """Mean absolute third derivative of position and heading.

    Requires at least 4 uniformly spaced samples; non-uniform timestamps are
    rejected so callers resample first.
    """
    t = np.asarray(timestamps, dtype=float)
    xy = np.atleast_2d(np.asarray(positions, dtype=float))
    psi = np.asarray(headings, dtype=float)
    if len(t) < 4:
        raise ConfigurationError("jerk metrics need at least 4 samples")
    dts = np.diff(t)
    dt = dts[0]
    if np.max(np.abs(dts - dt)) > 1e-6 * max(dt, 1.0):
        raise ConfigurationError("non-uniform timestamps; resample first")
    pos_jerk = np.diff(xy, n=3, axis=0) / dt**3
    heading_jerk = np.diff(np.unwrap(psi), n=3) / dt**3
    return JerkMetrics(
        heading=float(np.mean(np.abs(heading_jerk))),
        position=float(np.mean(np.linalg.norm(pos_jerk, axis=1))),
    )


def complementary_roll_pitch(roll: float, pitch: float, imu: ImuMeasurement,
                             dt: float, gain: float = 0.02,
                             a_body: np.ndarray | None = None) -> tuple[float, float]:
    """Gyro-integrated roll/pitch pulled toward the accelerometer gravity
    direction; keeps yaw estimation decoupled from attitude.

    ``a_body`` removes the estimated dynamic (e.g. centripetal) acceleration
    from the specific force so hard cornering does not masquerade as roll.
    """
    w = imu.angular_rate
    roll_g = roll + (w[0] + np.sin(roll) * np.tan(pitch) * w[1]
                     + np.cos(roll) * np.tan(pitch) * w[2]) * dt
    pitch_g = pitch + (np.cos(roll) * w[1] - np.sin(roll) * w[2]) * dt
    f = np.asarray(imu.specific_force, dtype=float)
    if a_body is not None:
        f = f - np.asarray(a_body, dtype=float)
    norm = np.linalg.norm(f)
    if norm < 1e-6 or abs(norm - 9.81) > 3.0:
        return float(roll_g), float(pitch_g)
    roll_a = np.arctan2(f[1], f[2])
    pitch_a = np.arctan2(-f[0], np.hypot(f[1], f[2]))
    roll_out = (1.0 - gain) * roll_g + gain * roll_a
    pitch_out = (1.0 - gain) * pitch_g + gain * pitch_a
    return float(roll_out), float(pitch_out)


@dataclass
class EstimatorConfig:
    q_diag: np.ndarray = field(default_factory=lambda: np.concatenate([
        np.full(3, 1e-3),   # position
        np.full(3, 1e-2),   # velocity (carries IMU accel noise)
        np.full(3, 1.0),    # acceleration block
        np.full(3, 2e-4),   # attitude (gyro noise plus unmodeled bias)
        np.full(3, 1e-4),   # angular rate
        np.full(3, 10.0),   # angular acceleration block
    ]))
    r_gnss_pos: dict = field(default_factory=lambda: {
        "top": 0.2**2, "side": 0.3**2, "vectornav": 0.5**2})
    r_gnss_vel: float = 0.1**2
    # v_y carries single-track model mismatch, so it is trusted loosely
    r_wheel: np.ndarray = field(default_factory=lambda: np.array(
        [0.05**2, 0.35**2, 0.1**2]))
    imq_enabled: bool = True
    wheel_odometry_enabled: bool = True
    fuse_gnss_velocity: bool = True
    fuse_gnss_heading: bool = True
    r_gnss_heading: float = 0.012**2


class Estimator:
    """Harness-facing fusion pipeline with a fixed per-tick ordering:
    predict -> GNSS (failover, position, velocity, course) -> wheel odometry.
    """

    def __init__(self, config: EstimatorConfig | None = None):
        self.config = config or EstimatorConfig()
        self.state: EstimatorState | None = None
        self.failover = FailoverState()
        self.histories: dict[str, list[float]] = {s: [] for s in GNSS_SOURCES}
        self.last_gnss_fuse_t: float | None = None
        self.dead_reckoning = False

    def initialize(self, t: float, position, velocity, yaw: float,
                   cov_diag: np.ndarray | None = None):
        x = np.zeros(STATE_DIM)
        x[POS] = position
        x[VEL] = velocity
        x[YAW] = yaw
        if cov_diag is None:
            cov_diag = np.concatenate([
                np.full(3, 0.5**2), np.full(3, 0.2**2), np.full(3, 1.0),
                np.full(3, 0.05**2), np.full(3, 0.05**2), np.full(3, 1.0),
            ])
        self.state = EstimatorState(x, np.diag(cov_diag), t)
        self.last_gnss_fuse_t = t

    def predict(self, imu: ImuMeasurement, dt: float):
        self.state = eskf_predict(self.state, imu, dt, self.config.q_diag)
        # centripetal compensation from the fused speed and the gyro yaw rate
        speed = float(np.hypot(self.state.x[3], self.state.x[4]))
        a_dyn = np.array([0.0, speed * float(imu.angular_rate[2]), 0.0])
        roll, pitch = complementary_roll_pitch(
            self.state.x[9], self.state.x[10], imu, dt, a_body=a_dyn)
        self.state.x[9] = roll
        self.state.x[10] = pitch

    def _c_or_none(self, c: float) -> float | None:
        return c if self.config.imq_enabled else None

    def process_gnss(self, measurements: list[GnssMeasurement], t: float):
        for m in measurements:
            if m.valid:
                self.histories[m.source].append(m.timestamp)
        self.failover = failover_step(self.failover, {
            s: np.asarray(h) for s, h in self.histories.items()}, t)
        self.dead_reckoning = self.failover.active is None
        if self.dead_reckoning:
            return

        active = [m for m in measurements
                  if m.valid and m.source == self.failover.active]
        if not active:
            return
        m = active[-1]
        dt_meas = max(t - (self.last_gnss_fuse_t if self.last_gnss_fuse_t
                           is not None else t - 0.05), 1e-3)
        speed = float(np.linalg.norm(self.state.x[VEL]))
        rate = float(np.linalg.norm(self.state.x[RATE]))
        c_pos, c_ori = soft_thresholds(speed, rate, dt_meas)

        h_pos = np.zeros((3, STATE_DIM))
        h_pos[:, POS] = np.eye(3)
        r_pos = np.eye(3) * self.config.r_gnss_pos[m.source]
        self.state = eskf_update(self.state, m.position, h_pos, r_pos,
                                 c=self._c_or_none(c_pos))

        if m.velocity is not None and self.config.fuse_gnss_velocity:
            h_vel = np.zeros((3, STATE_DIM))
            h_vel[:, VEL] = np.eye(3)
            r_vel = np.eye(3) * self.config.r_gnss_vel
            c_vel = c_pos / dt_meas
            self.state = eskf_update(self.state, m.velocity, h_vel, r_vel,
                                     c=self._c_or_none(c_vel))

        if m.heading is not None and self.config.fuse_gnss_heading:
            h_head = np.zeros((1, STATE_DIM))
            h_head[0, YAW] = 1.0
            r_head = np.array([[self.config.r_gnss_heading]])
            residual = np.array([wrap_angle(m.heading - self.state.x[YAW])])
            self.state = eskf_update(self.state, residual, h_head, r_head,
                                     c=self._c_or_none(c_ori),
                                     residual=residual)
        self.last_gnss_fuse_t = t

    def process_wheel_odometry(self, odo: WheelOdometry, params: VehicleParams,
                               dt_meas: float):
        if not self.config.wheel_odometry_enabled:
            return
        speed = float(np.linalg.norm(self.state.x[VEL]))
        rate = float(np.linalg.norm(self.state.x[RATE]))
        c_pos, _ = soft_thresholds(speed, rate, dt_meas)
        c_vel = c_pos / dt_meas
        # driven wheels over-read under traction slip, and the kinematic v_y
        # model ignores dynamic side slip: grow both variances with the
        # estimated horizontal acceleration so cornering does not bias the
        # dead-reckoning channels
        r_diag = self.config.r_wheel.copy()
        a_mag = float(np.linalg.norm(self.state.x[ACC][:2]))
        r_diag[0] = (np.sqrt(r_diag[0]) + 0.04 * a_mag) ** 2
        r_diag[1] = (np.sqrt(r_diag[1]) + 0.25 * a_mag) ** 2
        self.state = wheel_odometry_update(
            self.state, odo, params, np.diag(r_diag),
            c=self._c_or_none(c_vel))
