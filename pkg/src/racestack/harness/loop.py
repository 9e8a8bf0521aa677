"""Fixed-rate closed-loop scenario runner.

Per tick, in documented order: plant step (with the previous tick's actuator
command) -> sensor simulation with faults -> estimation -> perception -> race
logic -> target speed -> controllers -> actuator command for the next tick.
Operator commands apply only at tick boundaries, so a run is a pure function
of (scenario, seed, command log).
"""

from __future__ import annotations

import queue as queue_mod
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from ..control import (
    AbsConfig,
    AbsController,
    AccelToPedals,
    LateralMpc,
    LongitudinalConfig,
    LongitudinalPid,
    MpcConfig,
    MppiConfig,
    MppiController,
    PidGains,
    PurePursuitConfig,
    TractionControl,
    drag_throttle_feedforward,
    pure_pursuit,
    target_speed,
)
from ..errors import PathLostError
from ..estimation import Estimator, EstimatorConfig, RATE
from ..perception import OpponentTracker, RadarConfig, simulate_radar
from ..race import (
    ATTACK,
    FOLLOW,
    AccController,
    AccParams,
    RaceCommand,
    behavior_step,
    gap_curvilinear,
)
from ..track import (
    Raceline,
    TrackModel,
    centerline_raceline,
    frenet_project,
    load_track,
    min_curvature_raceline,
    nearest_index,
    speed_profile,
)
from ..tracks import make_oval, make_road_course
from ..vehicle import (
    ControlCommand,
    VehicleParams,
    VehicleState,
    body_accelerations,
    dynamic_step,
    gear_shift,
    rpm_from_speed,
    slip_angles,
    slip_ratio,
)
from .scenario import FaultWindow, Scenario
from .sensors import SensorSuite

SCHEMA_VERSION = "1"


@dataclass
class TelemetryFrame:
    tick: int
    t: float
    ego: dict
    est: dict
    opp: dict | None
    frenet: dict
    cmd: dict
    lambdas: list
    alpha_f: float
    alpha_r: float
    a_x: float
    a_y: float
    mode: str
    reason: str
    v_target: float
    gap: float | None
    active_gnss: str | None
    dead_reckoning: bool
    diag: dict = field(default_factory=dict)


@dataclass
class CommandEvent:
    tick: int
    name: str
    value: object


class _PendingCommand:
    def __init__(self, name, value):
        self.name = name
        self.value = value
        self.applied_tick: int | None = None
        self.error: str | None = None
        self.event = threading.Event()


@dataclass
class RunLog:
    scenario: Scenario
    frames: list
    command_events: list
    raceline: Raceline
    track: TrackModel
    tick_wall_ms: list = field(default_factory=list)


def build_track(spec: str) -> TrackModel:
    if spec == "builtin:oval":
        return make_oval()
    if spec == "builtin:road_course":
        return make_road_course()
    if spec == "builtin:brake_oval":
        # flat oval with tight turns: long straights into hard braking zones
        return make_oval(straight=320.0, radius=45.0, width=10.0, banking=0.0)
    if spec.startswith("builtin:"):
        raise ValueError(f"unknown builtin track {spec!r}")
    return load_track(spec)


def build_raceline(track: TrackModel, spec) -> Raceline:
    if spec.use_centerline:
        line = centerline_raceline(track, step=spec.step)
    else:
        line = min_curvature_raceline(track, margin=spec.margin, step=spec.step)
    return speed_profile(line, v_cap=spec.v_cap, a_lat_max=spec.a_lat_max,
                         a_acc_max=spec.a_acc_max, a_brk_max=spec.a_brk_max)


def offset_line(line: Raceline, offset: float) -> Raceline:
    """Parallel raceline at a constant lateral offset (positive left)."""
    if offset == 0.0:
        return line
    normals = np.column_stack([-np.sin(line.heading), np.cos(line.heading)])
    pts = line.points + offset * normals
    from ..geometry import arc_lengths, heading_and_curvature
    heading, curvature = heading_and_curvature(pts, line.closed)
    s = arc_lengths(pts)
    length = line.length
    if line.closed:
        length = float(s[-1] + np.hypot(*(pts[0] - pts[-1])))
    return Raceline(s=s, x=pts[:, 0], y=pts[:, 1], heading=heading,
                    curvature=curvature, v=line.v.copy(), closed=line.closed,
                    length=length)


class OpponentVehicle:
    """Scripted opponent: follows its own line at a scheduled speed."""

    def __init__(self, line: Raceline, start_s: float, schedule):
        self.line = line
        self.s = start_s
        self.schedule = np.asarray(schedule, dtype=float)

    def speed_at(self, t: float) -> float:
        return float(np.interp(t, self.schedule[:, 0], self.schedule[:, 1]))

    def advance(self, t: float, dt: float):
        self.s += self.speed_at(t) * dt
        if self.line.closed:
            self.s %= self.line.length

    def state(self, t: float) -> VehicleState:
        pos = self.line.position_at(self.s)
        v = self.speed_at(t)
        return VehicleState(x=float(pos[0]), y=float(pos[1]),
                            yaw=float(self.line.heading_at(self.s)),
                            v_x=v, omega=np.full(4, v / 0.30))


def _coerce_gains(cfg: dict) -> dict:
    out = dict(cfg)
    for key, value in out.items():
        if key.endswith("gains") and isinstance(value, dict):
            out[key] = PidGains(**value)
    return out


class SimulationRunner:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.track = build_track(scenario.track)
        self.raceline = build_raceline(self.track, scenario.raceline)
        self.params = VehicleParams(**scenario.vehicle)

        seq = np.random.SeedSequence(scenario.seed)
        s_sensor, s_radar = seq.spawn(2)
        self.sensors = SensorSuite(scenario, np.random.default_rng(s_sensor))
        self.radar_rng = np.random.default_rng(s_radar)

        # ego initial truth on (or laterally offset from) the raceline
        ego = scenario.ego
        self.ego_line = offset_line(self.raceline, ego.lateral_offset) \
            if ego.lateral_offset else self.raceline
        pos = self.raceline.position_at(ego.start_s)
        heading = float(self.raceline.heading_at(ego.start_s))
        if ego.lateral_offset:
            pos = pos + ego.lateral_offset * np.array([-np.sin(heading),
                                                       np.cos(heading)])
        self.truth = VehicleState(
            x=float(pos[0]), y=float(pos[1]), yaw=heading,
            v_x=ego.start_speed,
            omega=np.full(4, ego.start_speed / self.params.wheel_radius),
            gear=self._initial_gear(ego.start_speed))
        self.truth.rpm = rpm_from_speed(ego.start_speed, self.truth.gear,
                                        self.params)

        est_cfg = EstimatorConfig(
            imq_enabled=scenario.estimator.imq,
            wheel_odometry_enabled=scenario.estimator.wheel_odometry,
            fuse_gnss_velocity=scenario.estimator.fuse_gnss_velocity,
            fuse_gnss_heading=scenario.estimator.fuse_gnss_heading,
            r_gnss_heading=max(scenario.sensors.gnss.sigma_heading, 1e-3)**2,
        )
        self.estimator = Estimator(est_cfg)
        v_world = np.array([ego.start_speed * np.cos(heading),
                            ego.start_speed * np.sin(heading), 0.0])
        self.estimator.initialize(0.0, np.array([pos[0], pos[1], 0.0]),
                                  v_world, heading)

        radar_spec = scenario.sensors.radar
        self.radar_cfg = RadarConfig(
            max_range=radar_spec.max_range,
            fov_half_angle=np.radians(radar_spec.fov_deg / 2.0),
            opponent_points=radar_spec.opponent_points,
            clutter_points=radar_spec.clutter_points,
            ghosts=radar_spec.ghosts,
            sigma_pos=radar_spec.sigma_pos,
            sigma_vr=radar_spec.sigma_vr,
        )
        self.tracker = OpponentTracker(self.radar_cfg)
        self.radar_dt = 1.0 / radar_spec.rate_hz

        self.opponent = None
        if scenario.opponent.enabled:
            opp_line = offset_line(self.raceline,
                                   scenario.opponent.lateral_offset)
            self.opponent = OpponentVehicle(opp_line,
                                            scenario.opponent.start_s,
                                            scenario.opponent.speed_schedule)

        ctl = scenario.controllers
        self.pp_cfg = PurePursuitConfig(wheelbase=self.params.wheelbase,
                                        steer_max=self.params.steer_max,
                                        **ctl.pure_pursuit)
        self.long_pid = LongitudinalPid(LongitudinalConfig(
            **_coerce_gains(ctl.longitudinal_pid)))
        self.lmpc = LateralMpc(MpcConfig(steer_bound=self.params.steer_max,
                                         **ctl.lmpc), self.params) \
            if ctl.lateral == "lmpc" else None
        self.mppi = MppiController(
            MppiConfig(steer_bound=self.params.steer_max, **ctl.mppi),
            self.params) if "mppi" in (ctl.lateral, ctl.longitudinal) else None
        self.accel_to_pedals = AccelToPedals(a_brake_full=self.params.a_brk_max + 2.0)
        self.abs_ctrl = AbsController(AbsConfig(**_coerce_gains(ctl.abs))) \
            if ctl.abs_enabled else None
        self.traction = TractionControl()
        self.acc = AccController(AccParams(**scenario.race.acc))

        self.race_cmd = RaceCommand(
            v_max_operator=scenario.race.v_max_operator,
            attack_permitted=scenario.race.attack_permitted)

        self.command_queue: queue_mod.Queue = queue_mod.Queue()
        self._scheduled = sorted(scenario.commands, key=lambda c: c.t)
        self._scheduled_idx = 0

        self.current_cmd = ControlCommand()
        self.a_world = np.zeros(3)
        self.prev_roll = 0.0
        self.tick = 0
        self.frames: list[TelemetryFrame] = []
        self.command_events: list[CommandEvent] = []
        self.tick_wall_ms: list[float] = []

        self._truth_hint = nearest_index((self.truth.x, self.truth.y),
                                         self.raceline)
        self._est_hint = self._truth_hint
        self._opp_hint = self._truth_hint

    def _initial_gear(self, v: float) -> int:
        for gear in range(len(self.params.gear_ratios) - 1, -1, -1):
            if rpm_from_speed(v, gear, self.params) >= self.params.rpm_downshift:
                return gear
        return 0

    def _hint_from_s(self, s: float) -> int:
        step = max(self.raceline.s[1] - self.raceline.s[0], 1e-6)
        return int(s / step) % len(self.raceline.s)

    # -- operator commands ------------------------------------------------

    def queue_command(self, name: str, value, timeout: float = 2.0) -> int:
        """Queue a command for the next tick boundary (thread-safe).

        Blocks until the simulation applies it and returns that tick; raises
        ValueError for rejected commands."""
        pending = _PendingCommand(name, value)
        self.command_queue.put(pending)
        if not pending.event.wait(timeout=timeout):
            raise TimeoutError(f"command {name!r} was not applied in time")
        if pending.error is not None:
            raise ValueError(pending.error)
        return pending.applied_tick

    def _apply_command(self, name: str, value):
        if name == "set_max_speed":
            self.race_cmd = RaceCommand(float(value),
                                        self.race_cmd.attack_permitted,
                                        self.race_cmd.emergency_stop,
                                        self.tick * self.scenario.dt)
        elif name == "set_attack_permitted":
            self.race_cmd = RaceCommand(self.race_cmd.v_max_operator,
                                        bool(value),
                                        self.race_cmd.emergency_stop,
                                        self.tick * self.scenario.dt)
        elif name == "emergency_stop":
            self.race_cmd = RaceCommand(self.race_cmd.v_max_operator,
                                        self.race_cmd.attack_permitted,
                                        bool(value),
                                        self.tick * self.scenario.dt)
        elif name == "inject_gnss_dropout":
            if isinstance(value, dict):
                source = value.get("source", "top")
                duration = float(value.get("duration", 1.0))
            else:
                source, duration = "top", float(value)
            self.sensors.injected.append(FaultWindow(
                source=source, start=self.tick * self.scenario.dt,
                duration=duration))
        else:
            raise ValueError(f"unknown command {name!r}")
        self.command_events.append(CommandEvent(self.tick, name, value))

    def _apply_pending_commands(self, t: float):
        while self._scheduled_idx < len(self._scheduled) and \
                self._scheduled[self._scheduled_idx].t <= t + 1e-12:
            cmd = self._scheduled[self._scheduled_idx]
            self._apply_command(cmd.name, cmd.value)
            self._scheduled_idx += 1
        while True:
            try:
                pending = self.command_queue.get_nowait()
            except queue_mod.Empty:
                break
            try:
                self._apply_command(pending.name, pending.value)
                pending.applied_tick = self.tick
            except Exception as exc:
                pending.error = str(exc)
            pending.event.set()

    # -- helpers -----------------------------------------------------------

    def _est_pose(self):
        st = self.estimator.state
        return (float(st.x[0]), float(st.x[1]), st.yaw)

    def _est_body_velocity(self) -> tuple[float, float]:
        st = self.estimator.state
        c, s = np.cos(st.yaw), np.sin(st.yaw)
        vx = c * st.x[3] + s * st.x[4]
        vy = -s * st.x[3] + c * st.x[4]
        return float(vx), float(vy)

    def _est_vehicle_state(self) -> VehicleState:
        vx, vy = self._est_body_velocity()
        st = self.estimator.state
        return VehicleState(x=float(st.x[0]), y=float(st.x[1]), yaw=st.yaw,
                            v_x=vx, v_y=vy, r=float(st.x[RATE][2]),
                            omega=self.truth.omega.copy(),
                            gear=self.truth.gear, rpm=self.truth.rpm)

    # -- main loop ---------------------------------------------------------

    def step(self):
        t0 = time.perf_counter()
        scenario = self.scenario
        dt = scenario.dt
        t = self.tick * dt

        self._apply_pending_commands(t)

        # plant step with the previous command
        prev_truth = self.truth.copy()
        fp_truth = frenet_project((self.truth.x, self.truth.y, self.truth.yaw),
                                  self.raceline, hint=self._truth_hint)
        self._truth_hint = self._hint_from_s(fp_truth.s)
        banking = self.track.banking_at(fp_truth.s)
        brakes = None
        if self.abs_ctrl is not None and self.current_cmd.brake > 0:
            lambdas_meas = [slip_ratio(self.truth.v_x, w, self.params.wheel_radius)
                            for w in self.truth.omega]
            brakes = self.abs_ctrl.step(self.current_cmd.brake, lambdas_meas, dt)
        self._last_wheel_brakes = brakes if brakes is not None \
            else np.full(4, self.current_cmd.brake)
        self.truth = dynamic_step(self.truth, self.current_cmd, banking, dt,
                                  self.params, brake_per_wheel=brakes)
        if self.opponent is not None:
            self.opponent.advance(t, dt)

        # accelerations and attitude for the IMU
        a_x, a_y = body_accelerations(prev_truth, self.truth, dt)
        c, s = np.cos(prev_truth.yaw), np.sin(prev_truth.yaw)
        self.a_world = np.array([c * a_x - s * a_y, s * a_x + c * a_y, 0.0])
        roll = -banking
        roll_rate = (roll - self.prev_roll) / dt
        self.prev_roll = roll

        t_next = (self.tick + 1) * dt

        # sensing
        imu = self.sensors.imu(self.a_world, self.truth, roll, roll_rate, t_next)
        gnss = self.sensors.gnss(self.truth, t_next, self.tick + 1)
        odo = self.sensors.wheel_odometry(self.truth,
                                          self.current_cmd.steering, t_next)

        # estimation (fixed order: predict, GNSS, wheel odometry)
        self.estimator.predict(imu, dt)
        self.estimator.process_gnss(gnss, t_next)
        self.estimator.process_wheel_odometry(odo, self.params, dt)

        # perception at the radar rate
        detections = []
        if self.sensors.radar_due(self.tick + 1) and self.opponent is not None:
            points = simulate_radar(self.truth, self.opponent.state(t_next),
                                    self.track, self.radar_cfg, self.radar_rng)
            detections = self.tracker.process(points, self._est_vehicle_state(),
                                              self.track, t_next, self.radar_dt)

        # race logic
        est_pose = self._est_pose()
        fp_est = frenet_project(est_pose, self.raceline, hint=self._est_hint)
        self._est_hint = self._hint_from_s(fp_est.s)
        gap = None
        v_leader = None
        opp_track = self.tracker.track
        if opp_track is not None:
            fp_opp = frenet_project((opp_track.pose[0], opp_track.pose[1], 0.0),
                                    self.raceline, hint=self._opp_hint)
            self._opp_hint = self._hint_from_s(fp_opp.s)
            gap = gap_curvilinear(fp_est, fp_opp, self.raceline.length,
                                  self.raceline.closed)
            v_leader = opp_track.v_smoothed

        behavior = behavior_step(opp_track, self.race_cmd,
                                 opponent_ahead=gap is not None and gap < 0.5 * self.raceline.length,
                                 gap=gap, acc_range=self.acc.params.range_max)

        # target speed
        v_est_x, v_est_y = self._est_body_velocity()
        s_ahead = fp_est.s + max(v_est_x, 0.0) * scenario.controllers.speed_lookahead
        v_raceline_local = float(self.raceline.speed_at(s_ahead))
        acc_out = None
        if behavior.mode == FOLLOW and behavior.reason == "opponent_ahead" \
                and gap is not None and v_leader is not None:
            acc_out = self.acc.step(v_leader, v_est_x, gap, dt)
        else:
            self.acc.reset()
        v_target = target_speed(self.race_cmd.v_max_operator, v_raceline_local,
                                acc_output=acc_out, mode=behavior.mode)
        if behavior.reason == "emergency_stop":
            v_target = 0.0

        # controllers
        diag: dict = {}
        lateral = scenario.controllers.lateral
        longitudinal = scenario.controllers.longitudinal
        steering = self.current_cmd.steering
        throttle, brake = 0.0, 0.0

        mppi_long = None
        if self.mppi is not None:
            decim = max(int(round(scenario.tick_rate_hz
                                  / scenario.controllers.mppi_rate_hz)), 1)
            if self.tick % decim == 0:
                est_state = self._est_vehicle_state()
                cap_ext = self.race_cmd.v_max_operator
                if acc_out is not None:
                    cap_ext = min(cap_ext, acc_out)
                if behavior.reason == "emergency_stop":
                    cap_ext = 0.0
                u_long, u_steer, mppi_diag = self.mppi.step(
                    est_state, self.ego_line, self.track, seed=scenario.seed,
                    tick=self.tick, hint=self._est_hint, exec_dt=decim * dt,
                    v_cap=cap_ext)
                self._mppi_hold = (u_long, u_steer)
                diag["mppi"] = {k: v for k, v in mppi_diag.items()
                                if k != "frenet"}
                if self.mppi.fault:
                    diag["mppi_fault"] = True
            u_long, u_steer = self._mppi_hold
            if lateral == "mppi":
                steering = u_steer
            if longitudinal == "mppi":
                mppi_long = u_long

        if lateral == "pure_pursuit":
            try:
                steering = pure_pursuit(est_pose, self.ego_line, v_est_x,
                                        self.pp_cfg, hint=self._est_hint)
                diag["lateral"] = "pure_pursuit"
            except PathLostError:
                steering = 0.0
                diag["lateral"] = "path_lost"
        elif lateral == "lmpc":
            est = self.estimator.state
            delta, mpc_diag = self.lmpc.step(
                est_pose, max(v_est_x, 3.5), v_est_y, float(est.x[RATE][2]),
                self.ego_line, self.track, hint=self._est_hint)
            diag["qp_status"] = mpc_diag["qp_status"]
            if delta is None:   # QP failure: fall back with a fault flag
                steering = pure_pursuit(est_pose, self.ego_line, v_est_x,
                                        self.pp_cfg, hint=self._est_hint)
                diag["lateral"] = "lmpc_fallback_pp"
            else:
                steering = delta
                diag["lateral"] = "lmpc"

        if longitudinal == "pid":
            ff = drag_throttle_feedforward(v_target, self.truth.gear,
                                           self.params)
            throttle, brake = self.long_pid.step(v_est_x, v_target, dt,
                                                 feedforward=ff)
            diag["regime"] = self.long_pid.regime
        elif longitudinal == "mppi":
            if self.mppi.cfg.model == "kinematic":
                throttle, brake = self.accel_to_pedals.step(mppi_long, a_x, dt)
            else:
                throttle = max(mppi_long, 0.0)
                brake = max(-mppi_long, 0.0)
            if self.mppi.fault:
                throttle, brake = 0.0, 1.0

        rear_lams = [slip_ratio(self.truth.v_x, w, self.params.wheel_radius)
                     for w in self.truth.omega[2:4]]
        throttle = self.traction.step(throttle, rear_lams, dt)

        gear_req = gear_shift(self.truth.rpm, self.truth.gear, self.params)
        self.current_cmd = ControlCommand(
            steering=float(np.clip(steering, -self.params.steer_max,
                                   self.params.steer_max)),
            throttle=float(np.clip(throttle, 0.0, 1.0)),
            brake=float(np.clip(brake, 0.0, 1.0)),
            gear_request=gear_req)

        # telemetry
        lambdas = [slip_ratio(self.truth.v_x, w, self.params.wheel_radius)
                   for w in self.truth.omega]
        alpha_f, alpha_r = slip_angles(self.truth, self.current_cmd.steering,
                                       self.params)
        est = self.estimator.state
        opp_dict = None
        if self.opponent is not None:
            opp_truth = self.opponent.state(t_next)
            opp_dict = {
                "truth_x": opp_truth.x, "truth_y": opp_truth.y,
                "truth_v": opp_truth.v_x,
            }
            if opp_track is not None:
                opp_dict.update({
                    "track_x": float(opp_track.pose[0]),
                    "track_y": float(opp_track.pose[1]),
                    "track_v": float(opp_track.speed),
                    "v_smoothed": float(opp_track.v_smoothed),
                    "stopped": bool(opp_track.stopped),
                    "time_since_update": float(opp_track.time_since_update),
                })
        frame = TelemetryFrame(
            tick=self.tick, t=t_next,
            ego={"x": self.truth.x, "y": self.truth.y, "yaw": self.truth.yaw,
                 "v_x": self.truth.v_x, "v_y": self.truth.v_y,
                 "r": self.truth.r, "gear": self.truth.gear,
                 "rpm": self.truth.rpm},
            est={"x": float(est.x[0]), "y": float(est.x[1]),
                 "z": float(est.x[2]), "v_x": float(est.x[3]),
                 "v_y": float(est.x[4]), "yaw": est.yaw,
                 "roll": float(est.x[9]), "pitch": float(est.x[10]),
                 "cov_trace": float(np.trace(est.cov))},
            opp=opp_dict,
            frenet={"s": fp_est.s, "d": fp_est.d,
                    "heading_error": fp_est.heading_error,
                    "s_truth": fp_truth.s, "d_truth": fp_truth.d},
            cmd={"steering": self.current_cmd.steering,
                 "throttle": self.current_cmd.throttle,
                 "brake": self.current_cmd.brake,
                 "gear": self.truth.gear},
            lambdas=[float(l) for l in lambdas],
            alpha_f=alpha_f, alpha_r=alpha_r, a_x=a_x, a_y=a_y,
            mode=behavior.mode, reason=behavior.reason,
            v_target=float(v_target), gap=gap,
            active_gnss=self.estimator.failover.active,
            dead_reckoning=self.estimator.dead_reckoning,
            diag=diag)
        frame.diag["wheel_brakes"] = [float(b) for b in self._last_wheel_brakes]
        if self.abs_ctrl is not None:
            frame.diag["abs_active"] = self.abs_ctrl.active.tolist()
        self.frames.append(frame)
        self.tick += 1
        self.tick_wall_ms.append((time.perf_counter() - t0) * 1e3)
        return frame

    def run(self, frame_sink=None) -> RunLog:
        for _ in range(self.scenario.n_ticks):
            frame = self.step()
            if frame_sink is not None:
                frame_sink(frame)
        return RunLog(scenario=self.scenario, frames=self.frames,
                      command_events=self.command_events,
                      raceline=self.raceline, track=self.track,
                      tick_wall_ms=self.tick_wall_ms)


def run_scenario(scenario: Scenario, frame_sink=None) -> RunLog:
    return SimulationRunner(scenario).run(frame_sink=frame_sink)
