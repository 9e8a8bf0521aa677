"""Sensor simulation: GNSS (three sources with dropout faults), IMU, wheel
odometry and the radar frame clock.

Each source emits on its own decimated schedule relative to the 100 Hz tick;
dropout windows suppress a source entirely (no message, matching a receiver
that goes dark rather than one that flags invalid fixes).
"""

from __future__ import annotations

import numpy as np

from ..estimation import GNSS_SOURCES, GnssMeasurement, ImuMeasurement, WheelOdometry
from ..vehicle import VehicleState
from .scenario import Scenario


class SensorSuite:
    def __init__(self, scenario: Scenario, rng: np.random.Generator):
        self.spec = scenario.sensors
        self.faults = scenario.faults
        self.tick_rate = scenario.tick_rate_hz
        self.rng = rng
        self.injected: list = []   # extra fault windows from operator commands
        # unmodeled gyro bias: the estimator carries no bias state, so this
        # is what the heading corrections have to fight
        self.gyro_bias = rng.normal(scale=self.spec.imu.gyro_bias_init, size=3)

    def _dropped(self, source: str, t: float) -> bool:
        return any(f.covers(source, t) for f in self.faults) or \
            any(f.covers(source, t) for f in self.injected)

    def _emits(self, rate_hz: float, tick: int) -> bool:
        decim = max(int(round(self.tick_rate / rate_hz)), 1)
        return tick % decim == 0

    def gnss(self, truth: VehicleState, t: float, tick: int) -> list[GnssMeasurement]:
        out = []
        v_world = np.array([
            truth.v_x * np.cos(truth.yaw) - truth.v_y * np.sin(truth.yaw),
            truth.v_x * np.sin(truth.yaw) + truth.v_y * np.cos(truth.yaw),
            0.0,
        ])
        for source in GNSS_SOURCES:
            if not self._emits(self.spec.gnss.rate_hz[source], tick):
                continue
            if self._dropped(source, t):
                continue
            sig = self.spec.gnss.sigma_pos[source]
            pos = np.array([truth.x, truth.y, 0.0]) \
                + self.rng.normal(scale=sig, size=3)
            vel = v_world + self.rng.normal(scale=self.spec.gnss.sigma_vel, size=3)
            heading = None
            if source in ("top", "side"):   # dual-antenna units
                heading = truth.yaw + self.rng.normal(
                    scale=self.spec.gnss.sigma_heading)
            out.append(GnssMeasurement(source=source, position=pos,
                                       velocity=vel, valid=True, timestamp=t,
                                       heading=heading))
        return out

    def imu(self, a_world: np.ndarray, truth: VehicleState, roll: float,
            roll_rate: float, t: float) -> ImuMeasurement:
        """Specific force consistent with the estimator mechanization:
        f_b = R_wb'(roll, 0, yaw) (a_world - g)."""
        from ..estimation import GRAVITY, rotation_world_body
        rot = rotation_world_body(roll, 0.0, truth.yaw)
        f_b = rot.T @ (np.asarray(a_world) - GRAVITY)
        f_b = f_b + self.rng.normal(scale=self.spec.imu.sigma_accel, size=3)
        self.gyro_bias = self.gyro_bias + self.rng.normal(
            scale=self.spec.imu.gyro_bias_walk * np.sqrt(1.0 / self.tick_rate),
            size=3)
        w_b = np.array([roll_rate, 0.0, truth.r]) + self.gyro_bias \
            + self.rng.normal(scale=self.spec.imu.sigma_gyro, size=3)
        return ImuMeasurement(specific_force=f_b, angular_rate=w_b, timestamp=t)

    def wheel_odometry(self, truth: VehicleState, steering: float,
                       t: float) -> WheelOdometry:
        scale = self.spec.wheel.radius_scale
        speeds = truth.omega / scale \
            + self.rng.normal(scale=self.spec.wheel.sigma_speed, size=4)
        steer = steering + self.rng.normal(scale=self.spec.wheel.sigma_steering)
        return WheelOdometry(wheel_speeds=np.maximum(speeds, 0.0),
                             steering_angle=steer, timestamp=t)

    def radar_due(self, tick: int) -> bool:
        return self._emits(self.spec.radar.rate_hz, tick)
