"""Scenario files: a nested key/value schema (YAML) describing one experiment.

Every run is a pure function of (scenario, seed): the file pins the track,
vehicle, raceline, controller selection, estimator and sensor configs, the
fault schedule, the operator command schedule and the tick rate. Unknown keys
are rejected so typos fail loudly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from ..errors import ConfigurationError, SchemaError

VALID_TICK_RATES = (50, 100)
VALID_LATERAL = ("pure_pursuit", "lmpc", "mppi")
VALID_LONGITUDINAL = ("pid", "mppi")
VALID_FAULT_SOURCES = ("top", "side", "vectornav", "all")


@dataclass
class RacelineSpec:
    margin: float = 1.5
    step: float = 1.0
    v_cap: float = 45.0
    a_lat_max: float = 8.0
    a_acc_max: float = 5.0
    a_brk_max: float = 8.0
    use_centerline: bool = False


@dataclass
class EgoSpec:
    start_s: float = 0.0
    start_speed: float = 15.0
    lateral_offset: float = 0.0


@dataclass
class OpponentSpec:
    enabled: bool = False
    start_s: float = 80.0
    lateral_offset: float = 0.0
    speed_schedule: list = field(default_factory=lambda: [[0.0, 15.0]])


@dataclass
class GnssNoiseSpec:
    rate_hz: dict = field(default_factory=lambda: {
        "top": 20.0, "side": 20.0, "vectornav": 5.0})
    sigma_pos: dict = field(default_factory=lambda: {
        "top": 0.20, "side": 0.30, "vectornav": 0.50})
    sigma_vel: float = 0.10
    sigma_heading: float = 0.012   # dual-antenna sources only


@dataclass
class ImuNoiseSpec:
    sigma_accel: float = 0.05
    sigma_gyro: float = 0.0004
    gyro_bias_init: float = 0.004      # rad/s, drawn once per run
    gyro_bias_walk: float = 0.002      # rad/s per sqrt(s)


@dataclass
class WheelNoiseSpec:
    sigma_speed: float = 0.10      # rad/s per wheel
    sigma_steering: float = 0.002
    radius_scale: float = 1.0015   # effective-radius model error


@dataclass
class RadarNoiseSpec:
    rate_hz: float = 20.0
    sigma_pos: float = 0.15
    sigma_vr: float = 0.25
    ghosts: bool = True
    clutter_points: int = 8
    opponent_points: int = 6
    max_range: float = 200.0
    fov_deg: float = 120.0


@dataclass
class SensorsSpec:
    gnss: GnssNoiseSpec = field(default_factory=GnssNoiseSpec)
    imu: ImuNoiseSpec = field(default_factory=ImuNoiseSpec)
    wheel: WheelNoiseSpec = field(default_factory=WheelNoiseSpec)
    radar: RadarNoiseSpec = field(default_factory=RadarNoiseSpec)


@dataclass
class EstimatorSpec:
    wheel_odometry: bool = True
    imq: bool = True
    fuse_gnss_velocity: bool = True
    fuse_gnss_heading: bool = True


@dataclass
class ControllersSpec:
    lateral: str = "pure_pursuit"
    longitudinal: str = "pid"
    pure_pursuit: dict = field(default_factory=dict)
    lmpc: dict = field(default_factory=dict)
    mppi: dict = field(default_factory=dict)
    longitudinal_pid: dict = field(default_factory=dict)
    abs: dict = field(default_factory=dict)
    abs_enabled: bool = True
    speed_lookahead: float = 0.25
    mppi_rate_hz: float = 100.0


@dataclass
class RaceSpec:
    v_max_operator: float = 30.0
    attack_permitted: bool = False
    acc: dict = field(default_factory=dict)


@dataclass
class FaultWindow:
    source: str
    start: float
    duration: float

    def active(self, t: float) -> bool:
        return self.start <= t < self.start + self.duration

    def covers(self, source: str, t: float) -> bool:
        return self.active(t) and (self.source == "all" or self.source == source)


@dataclass
class ScheduledCommand:
    t: float
    name: str
    value: object


@dataclass
class MetricsSpec:
    alpha_spin: float = 0.12


@dataclass
class Scenario:
    name: str = "unnamed"
    track: str = "builtin:oval"
    duration_s: float = 10.0
    tick_rate_hz: int = 100
    seed: int = 0
    vehicle: dict = field(default_factory=dict)
    raceline: RacelineSpec = field(default_factory=RacelineSpec)
    ego: EgoSpec = field(default_factory=EgoSpec)
    opponent: OpponentSpec = field(default_factory=OpponentSpec)
    sensors: SensorsSpec = field(default_factory=SensorsSpec)
    estimator: EstimatorSpec = field(default_factory=EstimatorSpec)
    controllers: ControllersSpec = field(default_factory=ControllersSpec)
    race: RaceSpec = field(default_factory=RaceSpec)
    faults: list = field(default_factory=list)
    commands: list = field(default_factory=list)
    metrics: MetricsSpec = field(default_factory=MetricsSpec)

    def __post_init__(self):
        if self.tick_rate_hz not in VALID_TICK_RATES:
            raise ConfigurationError(
                f"tick_rate_hz must be one of {VALID_TICK_RATES}")
        if self.duration_s <= 0:
            raise ConfigurationError("duration_s must be positive")
        if self.controllers.lateral not in VALID_LATERAL:
            raise ConfigurationError(f"unknown lateral controller "
                                     f"{self.controllers.lateral!r}")
        if self.controllers.longitudinal not in VALID_LONGITUDINAL:
            raise ConfigurationError(f"unknown longitudinal controller "
                                     f"{self.controllers.longitudinal!r}")
        for fw in self.faults:
            if fw.source not in VALID_FAULT_SOURCES:
                raise ConfigurationError(f"unknown fault source {fw.source!r}")

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_rate_hz

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration_s * self.tick_rate_hz))

    def canonical_dict(self) -> dict:
        return asdict(self)


def _build(cls, data, path=""):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise SchemaError(f"scenario{path}: expected a mapping, got {data!r}")
    fields = {f.name: f for f in cls.__dataclass_fields__.values()}
    unknown = set(data) - set(fields)
    if unknown:
        raise SchemaError(f"scenario{path}: unknown keys {sorted(unknown)}")
    kwargs = {}
    nested = {
        "raceline": RacelineSpec, "ego": EgoSpec, "opponent": OpponentSpec,
        "sensors": SensorsSpec, "estimator": EstimatorSpec,
        "controllers": ControllersSpec, "race": RaceSpec,
        "metrics": MetricsSpec, "gnss": GnssNoiseSpec, "imu": ImuNoiseSpec,
        "wheel": WheelNoiseSpec, "radar": RadarNoiseSpec,
    }
    for key, value in data.items():
        if key in nested and cls in (Scenario, SensorsSpec):
            kwargs[key] = _build(nested[key], value, f"{path}.{key}")
        elif key == "faults":
            kwargs[key] = [FaultWindow(**f) for f in (value or [])]
        elif key == "commands":
            kwargs[key] = [ScheduledCommand(**c) for c in (value or [])]
        else:
            kwargs[key] = value
    return cls(**kwargs)


def load_scenario(path) -> Scenario:
    """Parse a scenario YAML file. Referenced track files are resolved
    relative to the scenario file."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"scenario file {path} does not exist")
    with open(path) as f:
        try:
            data = yaml.safe_load(f) or {}
        except yaml.YAMLError as exc:
            raise SchemaError(f"{path}: invalid YAML: {exc}") from exc
    scenario = _build(Scenario, data)
    if not scenario.track.startswith("builtin:"):
        track_path = (path.parent / scenario.track).resolve()
        if not track_path.exists():
            raise SchemaError(f"track file {track_path} does not exist")
        scenario.track = str(track_path)
    return scenario


def scenario_hash(scenario: Scenario) -> str:
    blob = json.dumps(scenario.canonical_dict(), sort_keys=True,
                      default=str).encode()
    return hashlib.sha256(blob).hexdigest()
