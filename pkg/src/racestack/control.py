"""Low-level controllers: Pure Pursuit, deadband longitudinal PID, slip-ratio
ABS, lateral linear MPC with banking, and sampling-based MPPI.

The MPC solves a condensed box/rate-constrained QP with an internally written
primal active-set method; MPPI evaluates noise-perturbed rollouts of either
the kinematic or the dynamic single-track model in Frenet coordinates, with
deterministic per-tick noise derivation so runs replay bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, PathLostError
from .geometry import wrap_angle
from .track import Raceline, TrackModel, frenet_project
from .vehicle import G, VehicleParams


# --------------------------------------------------------------------------
# pure pursuit

@dataclass(frozen=True)
class PurePursuitConfig:
    wheelbase: float = 3.0
    lookahead_gain: float = 0.55     # s of travel
    lookahead_min: float = 6.0
    lookahead_max: float = 35.0
    steer_max: float = 0.35

    def __post_init__(self):
        if self.lookahead_gain <= 0:
            raise ConfigurationError("lookahead gain must be positive")
        if self.lookahead_min < self.wheelbase:
            raise ConfigurationError("lookahead_min must be at least the wheelbase")


def pure_pursuit(pose, line: Raceline, v: float, cfg: PurePursuitConfig,
                 hint: int | None = None) -> float:
    """Geometric steering toward a speed-scaled lookahead point."""
    l_fw = float(np.clip(cfg.lookahead_gain * v, cfg.lookahead_min,
                         cfg.lookahead_max))
    fp = frenet_project(pose, line, hint=hint)
    if abs(fp.d) > 2.0 * cfg.lookahead_max:
        raise PathLostError("pose too far from the raceline for a target point")
    s_target = fp.s + l_fw
    if not line.closed:
        s_target = min(s_target, line.length)
    target = line.position_at(s_target)
    alpha = wrap_angle(np.arctan2(target[1] - pose[1], target[0] - pose[0])
                       - pose[2])
    delta = np.arctan(2.0 * cfg.wheelbase * np.sin(alpha) / l_fw)
    return float(np.clip(delta, -cfg.steer_max, cfg.steer_max))


# --------------------------------------------------------------------------
# PID primitives

@dataclass
class PidGains:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0


class Pid:
    """PID with integrator clamping at the output saturation."""

    def __init__(self, gains: PidGains, out_min: float, out_max: float):
        self.gains = gains
        self.out_min = out_min
        self.out_max = out_max
        self.integral = 0.0
        self.prev_error: float | None = None

    def reset(self):
        self.integral = 0.0
        self.prev_error = None

    def step(self, error: float, dt: float) -> float:
        de = 0.0 if self.prev_error is None else (error - self.prev_error) / dt
        self.prev_error = error
        self.integral += error * dt
        out = self.gains.kp * error + self.gains.ki * self.integral \
            + self.gains.kd * de
        if out > self.out_max:
            if self.gains.ki > 0:
                self.integral -= (out - self.out_max) / self.gains.ki
            out = self.out_max
        elif out < self.out_min:
            if self.gains.ki > 0:
                self.integral -= (out - self.out_min) / self.gains.ki
            out = self.out_min
        return out


# --------------------------------------------------------------------------
# longitudinal deadband PID

@dataclass(frozen=True)
class LongitudinalConfig:
    throttle_gains: PidGains = field(default_factory=lambda: PidGains(0.45, 0.12, 0.0))
    brake_gains: PidGains = field(default_factory=lambda: PidGains(0.10, 0.05, 0.0))
    deadband: float = 0.03            # fraction of v_target
    v_max: float = 100.0              # operator cap, m/s

    def __post_init__(self):
        if not 0.0 <= self.deadband <= 0.2:
            raise ConfigurationError("deadband coefficient must lie in [0, 0.2]")


class LongitudinalPid:
    """Velocity-error PID with three regimes: throttle, coast, brake.

    The brake engages only once the error crosses the speed-scaled deadband;
    integrators reset on every regime change.
    """

    def __init__(self, cfg: LongitudinalConfig | None = None):
        self.cfg = cfg or LongitudinalConfig()
        self.throttle_pid = Pid(self.cfg.throttle_gains, 0.0, 1.0)
        self.brake_pid = Pid(self.cfg.brake_gains, 0.0, 1.0)
        self.regime = "coast"

    def step(self, v_car: float, v_target: float, dt: float,
             feedforward: float = 0.0) -> tuple[float, float]:
        """``feedforward`` is an open-loop throttle holding v_target against
        drag, so the PID only carries transients (regime changes reset the
        integrators, which would otherwise leave a standing error)."""
        if v_target < 0:
            raise ConfigurationError("v_target must be non-negative")
        e_v = v_target - v_car
        if e_v > 0:
            regime = "throttle"
        elif e_v < -self.cfg.deadband * v_target:
            regime = "brake"
        else:
            regime = "coast"
        if regime != self.regime:
            self.throttle_pid.reset()
            self.brake_pid.reset()
            self.regime = regime

        if regime == "throttle":
            out = feedforward + self.throttle_pid.step(e_v, dt)
            return float(np.clip(out, 0.0, 1.0)), 0.0
        if regime == "brake":
            return 0.0, self.brake_pid.step(-e_v, dt)
        return 0.0, 0.0


# --------------------------------------------------------------------------
# ABS

@dataclass(frozen=True)
class AbsConfig:
    lambda_target: float = 0.10
    activation: float = 0.12
    gains: PidGains = field(default_factory=lambda: PidGains(4.0, 12.0, 0.0))
    release_fraction: float = 0.3     # deactivate once slip falls this far

    def __post_init__(self):
        if not 0.0 < self.lambda_target < 0.3:
            raise ConfigurationError("lambda_target must lie in (0, 0.3)")


class AbsController:
    """Per-wheel brake-pressure modulation tracking the target slip ratio.

    Passes the requested pressure through until a wheel's slip exceeds the
    activation threshold, then a PID pulls pressure down to hold the slip at
    lambda_target. Output never exceeds the request.
    """

    def __init__(self, cfg: AbsConfig | None = None):
        self.cfg = cfg or AbsConfig()
        self.pids = [Pid(self.cfg.gains, -1.0, 0.0) for _ in range(4)]
        self.active = np.zeros(4, dtype=bool)

    def step(self, requested: float, lambdas, dt: float) -> np.ndarray:
        requested = float(np.clip(requested, 0.0, 1.0))
        out = np.empty(4)
        for i, lam in enumerate(np.asarray(lambdas, dtype=float)):
            if requested <= 1e-6:
                self.active[i] = False
                self.pids[i].reset()
                out[i] = requested
                continue
            if not self.active[i] and lam > self.cfg.activation:
                self.active[i] = True
            elif self.active[i] and lam < self.cfg.lambda_target * self.cfg.release_fraction:
                self.active[i] = False
                self.pids[i].reset()
            if self.active[i]:
                correction = self.pids[i].step(self.cfg.lambda_target - lam, dt)
                out[i] = float(np.clip(requested + correction, 0.0, requested))
            else:
                out[i] = requested
        return out


@dataclass(frozen=True)
class TractionConfig:
    # drive slip is negative; the target stays well below the friction peak
    # so the rear axle keeps lateral capacity while accelerating
    lambda_target: float = -0.03
    activation: float = -0.04
    gains: PidGains = field(default_factory=lambda: PidGains(6.0, 18.0, 0.0))


class TractionControl:
    """Rear-slip throttle governor, the drive-side mirror of the ABS.

    The plant models wheelspin honestly, so an ungated full-throttle request
    at speed saturates the rear axle and erases its lateral capacity; this
    holds rear slip near lambda_target instead. Output never exceeds the
    request.
    """

    def __init__(self, cfg: TractionConfig | None = None):
        self.cfg = cfg or TractionConfig()
        self.pid = Pid(self.cfg.gains, -1.0, 0.0)
        self.active = False

    def step(self, requested: float, rear_lambdas, dt: float) -> float:
        requested = float(np.clip(requested, 0.0, 1.0))
        lam = float(np.mean(rear_lambdas))
        if requested <= 1e-6:
            self.active = False
            self.pid.reset()
            return requested
        if not self.active and lam < self.cfg.activation:
            self.active = True
        elif self.active and lam > 0.5 * self.cfg.lambda_target:
            self.active = False
            self.pid.reset()
        if not self.active:
            return requested
        correction = self.pid.step(lam - self.cfg.lambda_target, dt)
        return float(np.clip(requested + correction, 0.0, requested))


# --------------------------------------------------------------------------
# lateral linear MPC

@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 12
    dt: float = 0.05
    q_offset: float = 12.0
    q_heading: float = 8.0
    r_steer: float = 2.0
    r_steer_rate: float = 30.0
    steer_bound: float = 0.35
    steer_rate_bound: float = 0.08    # per step
    max_iterations: int = 200

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError("MPC horizon must be at least 1")
        if min(self.q_offset, self.q_heading, self.r_steer, self.r_steer_rate) < 0:
            raise ConfigurationError("MPC weights must be non-negative")
        if self.steer_bound <= 0 or self.steer_rate_bound <= 0:
            raise ConfigurationError("MPC bounds must be positive")


def solve_qp_active_set(h_mat: np.ndarray, g_vec: np.ndarray,
                        g_ineq: np.ndarray, h_ineq: np.ndarray,
                        u0: np.ndarray, max_iter: int = 200):
    """Primal active-set solver for min 1/2 u'Hu + g'u s.t. Gu <= h.

    ``u0`` must be feasible. Returns (u, converged).
    """
    u = u0.copy()
    n = len(u)
    active: list[int] = [i for i in range(len(h_ineq))
                         if abs(g_ineq[i] @ u - h_ineq[i]) < 1e-12]
    for _ in range(max_iter):
        rows = g_ineq[active] if active else np.zeros((0, n))
        kkt = np.block([[h_mat, rows.T],
                        [rows, np.zeros((len(active), len(active)))]])
        rhs = np.concatenate([-(h_mat @ u + g_vec), np.zeros(len(active))])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            return u, False
        p = sol[:n]
        lam = sol[n:]
        if np.linalg.norm(p) < 1e-10:
            if len(active) == 0 or np.all(lam >= -1e-9):
                return u, True
            active.pop(int(np.argmin(lam)))
            continue
        # largest step keeping all inactive constraints satisfied
        alpha = 1.0
        blocking = -1
        for i in range(len(h_ineq)):
            if i in active:
                continue
            gp = g_ineq[i] @ p
            if gp > 1e-12:
                step = (h_ineq[i] - g_ineq[i] @ u) / gp
                if step < alpha:
                    alpha = step
                    blocking = i
        u = u + alpha * p
        if blocking >= 0:
            active.append(blocking)
    return u, False


def lateral_error_model(v_x: float, params: VehicleParams):
    """Continuous-time lateral error dynamics [d, d_dot, e_psi, e_psi_dot]."""
    m, i_z = params.m, params.i_z
    c_f, c_r = params.c_f, params.c_r
    l_f, l_r = params.l_f, params.l_r
    a_mat = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [0.0, -(c_f + c_r) / (m * v_x), (c_f + c_r) / m,
         (-c_f * l_f + c_r * l_r) / (m * v_x)],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, -(c_f * l_f - c_r * l_r) / (i_z * v_x),
         (c_f * l_f - c_r * l_r) / i_z,
         -(c_f * l_f**2 + c_r * l_r**2) / (i_z * v_x)],
    ])
    b_steer = np.array([0.0, c_f / m, 0.0, c_f * l_f / i_z])
    b_yawdes = np.array([
        0.0,
        -(c_f * l_f - c_r * l_r) / (m * v_x) - v_x,
        0.0,
        -(c_f * l_f**2 + c_r * l_r**2) / (i_z * v_x),
    ])
    return a_mat, b_steer, b_yawdes


class LateralMpc:
    """Receding-horizon lateral controller on the linearized error model.

    Banking enters the lateral acceleration channel as g*sin(phi); raceline
    curvature is previewed along the horizon. Falls back with a fault flag
    when the QP does not converge.
    """

    def __init__(self, cfg: MpcConfig, params: VehicleParams):
        self.cfg = cfg
        self.params = params
        self.prev_steer = 0.0
        self._cache: dict[int, tuple] = {}

    def _discrete(self, v_x: float):
        # quantize speed so condensed matrices are cached deterministically
        key = int(round(v_x / 0.5))
        if key not in self._cache:
            v_q = max(key * 0.5, 3.0)
            a_c, b_c, bw_c = lateral_error_model(v_q, self.params)
            a_d = np.eye(4) + a_c * self.cfg.dt
            b_d = b_c * self.cfg.dt
            bw_d = bw_c * self.cfg.dt
            self._cache[key] = (a_d, b_d, bw_d, v_q)
        return self._cache[key]

    def step(self, pose, v_x: float, v_y: float, yaw_rate: float,
             line: Raceline, track: TrackModel | None,
             hint: int | None = None):
        cfg = self.cfg
        fp = frenet_project(pose, line, hint=hint)
        kappa0 = float(line.curvature_at(fp.s))
        e0 = np.array([
            fp.d,
            v_y * np.cos(fp.heading_error) + v_x * np.sin(fp.heading_error),
            fp.heading_error,
            yaw_rate - v_x * kappa0,
        ])

        a_d, b_d, bw_d, v_q = self._discrete(v_x)
        n = cfg.horizon

        # disturbance preview along the horizon
        s_pred = fp.s + v_x * cfg.dt * np.arange(n)
        kappas = np.atleast_1d(line.curvature_at(s_pred))
        banks = np.array([track.banking_at(s) for s in s_pred]) \
            if track is not None else np.zeros(n)
        w_list = [bw_d * (v_q * kappas[k])
                  + np.array([0.0, G * np.sin(banks[k]) * cfg.dt, 0.0, 0.0])
                  for k in range(n)]

        # condense: e_k = sx_k e0 + sum_j su[k,j] u_j + known disturbance
        q_mat = np.diag([cfg.q_offset, 0.0, cfg.q_heading, 0.0])
        powers = [np.eye(4)]
        for _ in range(n):
            powers.append(a_d @ powers[-1])
        su = np.zeros((n, 4, n))
        sw = np.zeros((n, 4))
        for k in range(1, n + 1):
            acc = np.zeros(4)
            for j in range(k):
                su[k - 1, :, j] = powers[k - 1 - j] @ b_d
                acc += powers[k - 1 - j] @ w_list[j]
            sw[k - 1] = acc
        sx = np.array([powers[k] @ e0 for k in range(1, n + 1)])

        h_mat = np.zeros((n, n))
        g_vec = np.zeros(n)
        for k in range(n):
            h_mat += su[k].T @ q_mat @ su[k]
            g_vec += su[k].T @ q_mat @ (sx[k] + sw[k])
        h_mat += np.eye(n) * cfg.r_steer
        diff = np.eye(n) - np.eye(n, k=-1)
        h_mat += cfg.r_steer_rate * diff.T @ diff
        rate_ref = np.zeros(n)
        rate_ref[0] = self.prev_steer
        g_vec -= cfg.r_steer_rate * diff.T @ rate_ref
        h_mat = 2.0 * h_mat
        g_vec = 2.0 * g_vec

        # constraints: |u| <= bound, |u_k - u_{k-1}| <= rate bound
        eye = np.eye(n)
        g_ineq = np.vstack([eye, -eye, diff, -diff])
        h_ineq = np.concatenate([
            np.full(n, cfg.steer_bound), np.full(n, cfg.steer_bound),
            np.full(n, cfg.steer_rate_bound) + rate_ref,
            np.full(n, cfg.steer_rate_bound) - rate_ref,
        ])

        u_start = np.full(n, np.clip(self.prev_steer, -cfg.steer_bound,
                                     cfg.steer_bound))
        u, converged = solve_qp_active_set(h_mat, g_vec, g_ineq, h_ineq,
                                           u_start, cfg.max_iterations)
        if not converged:
            return None, {"qp_status": "failed", "frenet": fp}
        self.prev_steer = float(u[0])
        return float(u[0]), {"qp_status": "ok", "frenet": fp,
                             "sequence": u}


# --------------------------------------------------------------------------
# MPPI

@dataclass(frozen=True)
class MppiConfig:
    rollouts: int = 96
    horizon: int = 20
    dt: float = 0.05
    lambda_temp: float = 0.6
    noise_std: tuple = (1.2, 0.05)     # (longitudinal, steering)
    noise_correlation: float = 0.8     # AR(1) coefficient along the horizon
    w_cross: float = 1.2
    w_heading: float = 4.0
    w_progress: float = 3.0
    w_boundary: float = 400.0
    w_control: float = 0.08
    w_control_rate: float = 40.0
    w_slip: float = 800.0              # dynamic model: stay in the linear tire range
    slip_threshold: float = 0.06       # rad
    w_friction: float = 500.0          # combined accel beyond the budget
    friction_budget: float = 0.80      # fraction of mu*g
    steer_slew: float = 1.5            # rad/s limit on the executed command
    boundary_margin: float = 0.8
    model: str = "kinematic"           # or "dynamic"
    a_max: float = 6.0                 # kinematic accel bound, m/s^2
    a_min: float = -9.0
    steer_bound: float = 0.35
    v_target_weight: float = 0.6
    parallel: bool = True

    def __post_init__(self):
        if self.rollouts < 2:
            raise ConfigurationError("MPPI needs at least 2 rollouts")
        if self.lambda_temp <= 0:
            raise ConfigurationError("MPPI temperature must be positive")
        if self.model not in ("kinematic", "dynamic"):
            raise ConfigurationError("MPPI model must be kinematic or dynamic")


def mppi_weights(costs: np.ndarray, lambda_temp: float) -> np.ndarray:
    """Softmax of negative cost; invariant to a common cost offset."""
    shifted = costs - np.min(costs)
    w = np.exp(-shifted / lambda_temp)
    return w / np.sum(w)


def mppi_update(nominal: np.ndarray, noise: np.ndarray, costs: np.ndarray,
                lambda_temp: float) -> np.ndarray:
    """Weighted-noise average update of the nominal control sequence."""
    w = mppi_weights(costs, lambda_temp)
    return nominal + np.einsum("k,kij->ij", w, noise)


class PathCache:
    """Raceline and track-width lookups by arc length for fast rollouts."""

    def __init__(self, line: Raceline, track: TrackModel | None):
        self.length = line.length
        self.closed = line.closed
        if line.closed:
            self.s = np.concatenate([line.s, [line.length]])
            wrap = lambda a: np.concatenate([a, [a[0]]])  # noqa: E731
        else:
            self.s = line.s
            wrap = lambda a: a  # noqa: E731
        self.heading = np.unwrap(wrap(line.heading))
        self.curvature = wrap(line.curvature)
        self.v = wrap(line.v)
        if track is not None:
            from .geometry import arc_lengths
            nodes = arc_lengths(track.centerline)
            scale = self.length / max(nodes[-1], 1e-9)
            self.w_left = np.interp(self.s, nodes * scale, track.width_left)
            self.w_right = np.interp(self.s, nodes * scale, track.width_right)
            self.banking = np.interp(self.s, nodes * scale, track.banking)
        else:
            self.w_left = np.full_like(self.s, np.inf)
            self.w_right = np.full_like(self.s, np.inf)
            self.banking = np.zeros_like(self.s)

    def lookup(self, s):
        q = np.mod(s, self.length) if self.closed else np.clip(s, 0.0, self.length)
        return (np.interp(q, self.s, self.heading),
                np.interp(q, self.s, self.curvature),
                np.interp(q, self.s, self.v),
                np.interp(q, self.s, self.w_left),
                np.interp(q, self.s, self.w_right))

    def banking_at(self, s):
        q = np.mod(s, self.length) if self.closed else np.clip(s, 0.0, self.length)
        return np.interp(q, self.s, self.banking)


class MppiController:
    """Sampling controller over Frenet-frame rollouts of the vehicle model."""

    def __init__(self, cfg: MppiConfig, params: VehicleParams):
        self.cfg = cfg
        self.params = params
        self.nominal = np.zeros((cfg.horizon, 2))
        self.fault = False

    def _noise(self, seed: int, tick: int) -> np.ndarray:
        """Time-correlated (AR(1)) perturbations; white noise would make the
        weighted nominal update jitter tick to tick."""
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(entropy=(seed, tick))))
        std = np.asarray(self.cfg.noise_std)
        white = rng.normal(size=(self.cfg.rollouts, self.cfg.horizon, 2))
        rho = self.cfg.noise_correlation
        out = np.empty_like(white)
        out[:, 0] = white[:, 0]
        for k in range(1, self.cfg.horizon):
            out[:, k] = rho * out[:, k - 1] + np.sqrt(1.0 - rho**2) * white[:, k]
        return out * std

    def _clip_controls(self, u: np.ndarray) -> np.ndarray:
        out = u.copy()
        if self.cfg.model == "kinematic":
            out[..., 0] = np.clip(out[..., 0], self.cfg.a_min, self.cfg.a_max)
        else:
            out[..., 0] = np.clip(out[..., 0], -1.0, 1.0)
        out[..., 1] = np.clip(out[..., 1], -self.cfg.steer_bound,
                              self.cfg.steer_bound)
        return out

    def _rollout_costs(self, controls: np.ndarray, state0, cache: PathCache,
                       fp0, prev_steer: float = 0.0,
                       v_cap: float = np.inf) -> tuple[np.ndarray, np.ndarray]:
        """Frenet-frame rollout of (K, N, 2) control sequences."""
        cfg = self.cfg
        k_n = controls.shape[0]
        dt = cfg.dt
        s = np.full(k_n, fp0.s)
        d = np.full(k_n, fp0.d)
        e_psi = np.full(k_n, fp0.heading_error)
        v = np.full(k_n, max(state0.v_x, 0.1))
        costs = np.zeros(k_n)
        violated = np.zeros(k_n, dtype=bool)
        if cfg.model == "dynamic":
            # planning approximation: start from steady rolling; the fused
            # v_y estimate is noisy enough at 100 Hz to excite a weave if fed
            # straight into the rollouts
            v_y = np.zeros(k_n)
            r = np.full(k_n, state0.r)

        for k in range(cfg.horizon):
            u_long = controls[:, k, 0]
            steer = controls[:, k, 1]
            _, kappa, v_ref, w_l, w_r = cache.lookup(s)
            bank = cache.banking_at(s)
            if cfg.model == "kinematic":
                a_x = u_long
                # the plant cannot yaw beyond the friction envelope, so the
                # planning model saturates steering with speed
                steer_cap = np.arctan(0.85 * G * self.params.mu
                                      * self.params.wheelbase
                                      / np.maximum(v, 1.0) ** 2)
                steer_eff = np.clip(steer, -steer_cap, steer_cap)
                e_psi = e_psi + (v * np.tan(steer_eff) / self.params.wheelbase
                                 - v * kappa) * dt
                lat_rate = v * np.sin(e_psi)
                a_lat = v**2 * np.tan(np.abs(steer_eff)) / self.params.wheelbase
            else:
                a_x = np.where(u_long >= 0.0, u_long * cfg.a_max,
                               -u_long * cfg.a_min)
                # sub-step the stiff lateral dynamics (Euler limit ~2/|eig|)
                v_eff = np.maximum(v, 6.0)
                for _ in range(2):
                    alpha_f = steer - (v_y + self.params.l_f * r) / v_eff
                    alpha_r = -(v_y - self.params.l_r * r) / v_eff
                    f_yf = np.clip(self.params.c_f * alpha_f,
                                   -self.params.mu * self.params.f_z_front,
                                   self.params.mu * self.params.f_z_front)
                    f_yr = np.clip(self.params.c_r * alpha_r,
                                   -self.params.mu * self.params.f_z_rear,
                                   self.params.mu * self.params.f_z_rear)
                    v_y = v_y + ((f_yf + f_yr) / self.params.m
                                 + G * np.sin(bank) - r * v) * (dt / 2)
                    r = r + ((self.params.l_f * f_yf - self.params.l_r * f_yr)
                             / self.params.i_z) * (dt / 2)
                e_psi = e_psi + r * dt - v * kappa * dt
                lat_rate = v * np.sin(e_psi) + v_y * np.cos(e_psi)
                over_f = np.maximum(np.abs(alpha_f) - cfg.slip_threshold, 0.0)
                over_r = np.maximum(np.abs(alpha_r) - cfg.slip_threshold, 0.0)
                costs += cfg.w_slip * (over_f**2 + over_r**2)
                a_lat = np.abs(f_yf + f_yr) / self.params.m
            ds = v * np.cos(e_psi) * dt / np.maximum(1.0 - d * kappa, 0.3)
            s = s + ds
            d = d + lat_rate * dt
            v = np.maximum(v + a_x * dt, 0.1)

            budget = cfg.friction_budget * self.params.mu * G
            over_budget = np.maximum(np.hypot(a_x, a_lat) / budget - 1.0, 0.0)
            costs += cfg.w_friction * over_budget**2

            out = (d > w_l - cfg.boundary_margin) | (d < -(w_r - cfg.boundary_margin))
            violated |= out
            costs += cfg.w_cross * d**2
            costs += cfg.w_heading * e_psi**2
            costs += cfg.w_boundary * out
            costs -= cfg.w_progress * ds
            costs += cfg.v_target_weight * (v - np.minimum(v_ref, v_cap)) ** 2
            costs += cfg.w_control * (controls[:, k, 0]**2 + 25.0 * steer**2)
            # rate penalty anchored to the last executed steering at k = 0
            anchor = prev_steer if k == 0 else controls[:, k - 1, 1]
            costs += cfg.w_control_rate * (steer - anchor) ** 2
        return costs, violated

    def step(self, state, line: Raceline, track: TrackModel | None,
             seed: int, tick: int, hint: int | None = None,
             exec_dt: float | None = None, v_cap: float = np.inf):
        """Returns (longitudinal command, steering, diagnostics).

        ``exec_dt`` is the caller's control period (for the steering slew
        limit); ``v_cap`` bounds the rollout speed target (operator cap, ACC
        output or emergency stop)."""
        cfg = self.cfg
        cache = getattr(self, "_cache", None)
        if cache is None or cache.length != line.length:
            self._cache = cache = PathCache(line, track)
        fp0 = frenet_project((state.x, state.y, state.yaw), line, hint=hint)

        noise = self._noise(seed, tick)
        perturbed = self._clip_controls(self.nominal[None, :, :] + noise)
        eff_noise = perturbed - self.nominal[None, :, :]
        prev_steer = getattr(self, "_steer_prev", 0.0)

        if cfg.parallel:
            costs, violated = self._rollout_costs(perturbed, state, cache, fp0,
                                                  prev_steer, v_cap)
        else:
            costs = np.empty(cfg.rollouts)
            violated = np.empty(cfg.rollouts, dtype=bool)
            for i in range(cfg.rollouts):
                c, v = self._rollout_costs(perturbed[i:i + 1], state, cache,
                                           fp0, prev_steer, v_cap)
                costs[i] = c[0]
                violated[i] = v[0]

        self.fault = bool(np.all(violated))
        self.nominal = self._clip_controls(
            mppi_update(self.nominal, eff_noise, costs, cfg.lambda_temp))
        # slew-limit the first steering in place, so the executed command and
        # the optimizer's belief stay consistent
        max_step = cfg.steer_slew * (exec_dt if exec_dt is not None else cfg.dt)
        self.nominal[0, 1] = float(np.clip(self.nominal[0, 1],
                                           prev_steer - max_step,
                                           prev_steer + max_step))
        u0 = self.nominal[0].copy()
        self._steer_prev = u0[1]
        self.nominal = np.vstack([self.nominal[1:], self.nominal[-1:]])
        diag = {"cost_min": float(np.min(costs)),
                "cost_mean": float(np.mean(costs)),
                "violated_fraction": float(np.mean(violated)),
                "fault": self.fault, "frenet": fp0}
        return float(u0[0]), float(u0[1]), diag


class AccelToPedals:
    """Maps a desired longitudinal acceleration to throttle/brake, with an
    integral trim on the realized acceleration error."""

    def __init__(self, a_drive_full: float = 6.0, a_brake_full: float = 11.0,
                 ki: float = 0.02):
        self.a_drive_full = a_drive_full
        self.a_brake_full = a_brake_full
        self.ki = ki
        self.trim = 0.0

    def step(self, a_des: float, a_meas: float, dt: float) -> tuple[float, float]:
        self.trim = float(np.clip(self.trim + self.ki * (a_des - a_meas) * dt,
                                  -0.2, 0.2))
        u = a_des / self.a_drive_full if a_des >= 0 else a_des / self.a_brake_full
        u += self.trim
        if u >= 0:
            return float(np.clip(u, 0.0, 1.0)), 0.0
        return 0.0, float(np.clip(-u, 0.0, 1.0))


def drag_throttle_feedforward(v: float, gear: int,
                              params: VehicleParams) -> float:
    """Open-loop throttle balancing drag, rolling resistance and the
    closed-throttle engine braking at speed v."""
    from .vehicle import engine_torque, rpm_from_speed
    force = params.c_drag * v**2 + params.c_roll * params.m * G
    rpm = rpm_from_speed(v, gear, params)
    ratio = params.gear_ratios[gear]
    full = engine_torque(rpm, params) * ratio / params.wheel_radius
    f_eb = params.engine_brake * (rpm / 1000.0) ** 2 * ratio / params.wheel_radius
    return float(np.clip((force + f_eb) / max(full + f_eb, 1e-6), 0.0, 1.0))


# --------------------------------------------------------------------------
# target speed composition

def target_speed(v_operator_cap: float, v_raceline_local: float,
                 acc_output: float | None = None, mode: str = "follow",
                 rule: str = "cap_min") -> float:
    """Compose the commanded speed from the operator cap, the raceline speed
    and (in Follow mode) the gap controller output.

    ``rule="literal_max"`` switches the base composition from min() to the
    literal max() form.
    """
    if v_operator_cap < 0 or v_raceline_local < 0:
        raise ConfigurationError("speeds must be non-negative")
    if rule == "literal_max":
        base = max(v_operator_cap, v_raceline_local)
    else:
        base = min(v_operator_cap, v_raceline_local)
    if mode == "follow" and acc_output is not None:
        base = min(base, acc_output)
    return max(base, 0.0)
