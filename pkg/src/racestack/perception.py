"""Simulated 4D radar returns and the opponent detection/tracking pipeline.

Stages: quality thresholding, static-return removal, density clustering over
(x, y, z, scaled radial velocity), rigid transform to the global frame with
track-boundary gating, nearest-cost association, a constant-velocity
point-mass UKF, and stop detection with moving-average velocity smoothing.
Every stage is a pure function of its inputs; the tracker object only carries
the single opponent track between frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError
from .track import TrackModel, boundary_contains
from .vehicle import VehicleState


@dataclass(frozen=True)
class RadarPoint:
    """One return in the radar (ego body) frame."""

    position: np.ndarray       # m, body frame
    v_r: float                 # radial velocity, m/s (positive receding)
    snr: float                 # dB
    existence_prob: float
    peak_conf: float
    rss: float                 # dBm
    ambiguity: bool = False


@dataclass(frozen=True)
class QualityThresholds:
    snr_min: float = 10.0
    existence_min: float = 0.8
    peak_min: float = 0.5
    rss_min: float = -90.0
    require_clean: bool = True


@dataclass(frozen=True)
class DetectionCluster:
    centroid: np.ndarray       # m, global frame
    velocity: float | None     # ego-motion-compensated speed along the line of sight
    point_count: int
    timestamp: float


@dataclass(frozen=True)
class OpponentTrack:
    pose: np.ndarray           # m, global frame
    velocity: np.ndarray       # m/s, 2D
    cov: np.ndarray            # 6x6, [p, v]
    age: float = 0.0
    time_since_update: float = 0.0
    stopped: bool = False
    v_smoothed: float = 0.0
    speed_history: tuple = ()
    v_z: float = 0.0           # internal filter state; flat tracks keep it ~0

    @property
    def speed(self) -> float:
        return float(np.hypot(self.velocity[0], self.velocity[1]))


@dataclass
class RadarConfig:
    max_range: float = 200.0
    fov_half_angle: float = np.radians(60.0)
    opponent_points: int = 6
    cluster_spread: float = 0.5
    clutter_points: int = 8
    ghosts: bool = True
    sigma_pos: float = 0.15
    sigma_vr: float = 0.25
    thresholds: QualityThresholds = field(default_factory=QualityThresholds)
    dbscan_eps: float = 1.5
    dbscan_min_pts: int = 3
    v_r_scale: float = 2.0       # m per m/s when mixing v_r into the features
    eps_static: float = 0.5
    n_min: int = 3
    w_pose: float = 1.0          # association cost weight, 1/m
    w_vel: float = 0.5           # s/m
    gate_cost: float = 10.0
    track_timeout: float = 3.0
    v_stop: float = 1.0
    smoothing_window: int = 10
    ukf_q_pos: float = 0.02
    ukf_q_vel: float = 1.0
    ukf_r_pos: float = 0.15**2
    # the LOS-projected speed under-reads through curves, so the filter
    # leans on the position sequence for velocity
    ukf_r_vel: float = 2.0**2


def _in_fov(p_body: np.ndarray, cfg: RadarConfig) -> bool:
    rng = np.hypot(p_body[0], p_body[1])
    if rng < 0.5 or rng > cfg.max_range:
        return False
    return abs(np.arctan2(p_body[1], p_body[0])) <= cfg.fov_half_angle


def _to_body(p_world, ego: VehicleState) -> np.ndarray:
    c, s = np.cos(ego.yaw), np.sin(ego.yaw)
    dx, dy = p_world[0] - ego.x, p_world[1] - ego.y
    return np.array([c * dx + s * dy, -s * dx + c * dy])


def _to_world(p_body, ego: VehicleState) -> np.ndarray:
    c, s = np.cos(ego.yaw), np.sin(ego.yaw)
    return np.array([ego.x + c * p_body[0] - s * p_body[1],
                     ego.y + s * p_body[0] + c * p_body[1]])


def _ego_velocity_world(ego: VehicleState) -> np.ndarray:
    c, s = np.cos(ego.yaw), np.sin(ego.yaw)
    return np.array([c * ego.v_x - s * ego.v_y, s * ego.v_x + c * ego.v_y])


def _nearest_on_polygon(point: np.ndarray, poly: np.ndarray) -> np.ndarray:
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    denom = np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-12)
    t = np.clip(np.einsum("ij,ij->i", point - a, ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d2 = np.einsum("ij,ij->i", point - proj, point - proj)
    return proj[np.argmin(d2)]


def simulate_radar(ego: VehicleState, opponent: VehicleState | None,
                   track: TrackModel, cfg: RadarConfig,
                   rng: np.random.Generator) -> list[RadarPoint]:
    """Synthesize one radar frame: opponent cluster, wall clutter, and
    multipath ghosts mirrored outside the track boundary."""
    points: list[RadarPoint] = []
    v_ego_w = _ego_velocity_world(ego)

    def los_unit(p_body):
        r = np.hypot(p_body[0], p_body[1])
        return p_body[:2] / max(r, 1e-9)

    def radial(u_body, v_rel_world):
        c, s = np.cos(ego.yaw), np.sin(ego.yaw)
        v_rel_body = np.array([c * v_rel_world[0] + s * v_rel_world[1],
                               -s * v_rel_world[0] + c * v_rel_world[1]])
        return float(u_body @ v_rel_body)

    if opponent is not None:
        p_body = _to_body((opponent.x, opponent.y), ego)
        if _in_fov(p_body, cfg):
            v_opp_w = _ego_velocity_world(opponent)
            for _ in range(cfg.opponent_points):
                offs = rng.normal(scale=cfg.cluster_spread, size=2)
                p = p_body + offs + rng.normal(scale=cfg.sigma_pos, size=2)
                u = los_unit(p)
                v_r = radial(u, v_opp_w - v_ego_w) + rng.normal(scale=cfg.sigma_vr)
                points.append(RadarPoint(
                    position=np.array([p[0], p[1], 0.3]), v_r=v_r,
                    snr=rng.uniform(15.0, 30.0),
                    existence_prob=rng.uniform(0.85, 1.0),
                    peak_conf=rng.uniform(0.6, 1.0),
                    rss=rng.uniform(-80.0, -60.0)))

            if cfg.ghosts:
                # multipath: the opponent mirrored across the nearest outer wall
                p_opp_w = np.array([opponent.x, opponent.y])
                wall = _nearest_on_polygon(p_opp_w, track.outer_boundary)
                ghost_w = 2.0 * wall - p_opp_w
                g_body = _to_body(ghost_w, ego)
                if _in_fov(g_body, cfg):
                    for _ in range(max(cfg.opponent_points - 2, 3)):
                        p = g_body + rng.normal(scale=cfg.cluster_spread, size=2)
                        u = los_unit(p)
                        v_r = radial(u, v_opp_w - v_ego_w) \
                            + rng.normal(scale=2.0 * cfg.sigma_vr)
                        points.append(RadarPoint(
                            position=np.array([p[0], p[1], 0.3]), v_r=v_r,
                            snr=rng.uniform(12.0, 22.0),
                            existence_prob=rng.uniform(0.8, 0.95),
                            peak_conf=rng.uniform(0.5, 0.9),
                            rss=rng.uniform(-88.0, -70.0)))

    # static clutter from the walls: radial velocity is the negative of the
    # projected ego velocity
    for poly in (track.outer_boundary, track.inner_boundary):
        if poly.size == 0:
            continue
        picks = rng.integers(0, len(poly), size=cfg.clutter_points // 2)
        for i in picks:
            p_body = _to_body(poly[i], ego)
            if not _in_fov(p_body, cfg):
                continue
            p = p_body + rng.normal(scale=cfg.sigma_pos, size=2)
            u = los_unit(p)
            v_r = radial(u, -v_ego_w) + rng.normal(scale=0.3 * cfg.sigma_vr)
            points.append(RadarPoint(
                position=np.array([p[0], p[1], 0.8]), v_r=v_r,
                snr=rng.uniform(6.0, 25.0),
                existence_prob=rng.uniform(0.5, 1.0),
                peak_conf=rng.uniform(0.3, 1.0),
                rss=rng.uniform(-95.0, -65.0),
                ambiguity=bool(rng.uniform() < 0.2)))
    return points


def quality_filter(points: list[RadarPoint],
                   thresholds: QualityThresholds) -> list[RadarPoint]:
    """Keep points meeting every signal-quality predicate."""
    out = []
    for p in points:
        if p.snr < thresholds.snr_min:
            continue
        if p.existence_prob < thresholds.existence_min:
            continue
        if p.peak_conf < thresholds.peak_min:
            continue
        if p.rss < thresholds.rss_min:
            continue
        if thresholds.require_clean and p.ambiguity:
            continue
        out.append(p)
    return out


def static_filter(points: list[RadarPoint], ego_velocity_body: np.ndarray,
                  eps_static: float) -> list[RadarPoint]:
    """Drop returns whose radial velocity matches the negative projected ego
    velocity (static world objects)."""
    v = np.asarray(ego_velocity_body, dtype=float)[:2]
    out = []
    for p in points:
        u = p.position[:2] / max(np.hypot(p.position[0], p.position[1]), 1e-9)
        if abs(p.v_r + float(v @ u)) >= eps_static:
            out.append(p)
    return out


def dbscan(features: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Standard density-based clustering; label -1 marks noise.

    Deterministic: seeds expand in index order, border points join the first
    cluster that reaches them.
    """
    if eps <= 0 or min_pts < 1:
        raise ConfigurationError("dbscan needs eps > 0 and min_pts >= 1")
    x = np.atleast_2d(np.asarray(features, dtype=float))
    n = len(x)
    labels = np.full(n, -1, dtype=int)
    if n == 0:
        return labels
    d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
    neighbor = d2 <= eps**2
    core = neighbor.sum(axis=1) >= min_pts

    cluster = 0
    for seed in range(n):
        if labels[seed] != -1 or not core[seed]:
            continue
        labels[seed] = cluster
        queue = [seed]
        while queue:
            j = queue.pop(0)
            for k in np.flatnonzero(neighbor[j]):
                if labels[k] == -1:
                    labels[k] = cluster
                    if core[k]:
                        queue.append(int(k))
        cluster += 1
    return labels


def radar_features(points: list[RadarPoint], v_r_scale: float) -> np.ndarray:
    if not points:
        return np.empty((0, 4))
    return np.array([[p.position[0], p.position[1], p.position[2],
                      v_r_scale * p.v_r] for p in points])


def gate_clusters(points: list[RadarPoint], labels: np.ndarray,
                  ego: VehicleState, track: TrackModel, cfg: RadarConfig,
                  t: float) -> list[DetectionCluster]:
    """Transform cluster centroids to the global frame and keep those inside
    the track boundary set with enough support."""
    v_ego_w = _ego_velocity_world(ego)
    out = []
    for label in sorted(set(labels)):
        if label < 0:
            continue
        members = [p for p, l in zip(points, labels) if l == label]
        if len(members) < cfg.n_min:
            continue
        centroid_body = np.mean([p.position for p in members], axis=0)
        centroid_w = _to_world(centroid_body, ego)
        if not boundary_contains(centroid_w, track):
            continue
        # ego-motion-compensated speed along the line of sight
        comp = []
        c, s = np.cos(ego.yaw), np.sin(ego.yaw)
        v_ego_body = np.array([c * v_ego_w[0] + s * v_ego_w[1],
                               -s * v_ego_w[0] + c * v_ego_w[1]])
        for p in members:
            u = p.position[:2] / max(np.hypot(p.position[0], p.position[1]), 1e-9)
            comp.append(p.v_r + float(v_ego_body @ u))
        out.append(DetectionCluster(
            centroid=np.array([centroid_w[0], centroid_w[1], centroid_body[2]]),
            velocity=float(np.mean(comp)),
            point_count=len(members),
            timestamp=t))
    return out


def associate(detections: list[DetectionCluster], prior: OpponentTrack,
              cfg: RadarConfig) -> DetectionCluster | None:
    """Minimal-cost detection against the prior track, or None outside the
    gate (the track coasts)."""
    if not detections:
        return None
    costs = [cfg.w_pose * float(np.linalg.norm(d.centroid - prior.pose))
             + (cfg.w_vel * abs(d.velocity - prior.speed)
                if d.velocity is not None else 0.0)
             for d in detections]
    best = int(np.argmin(costs))
    if costs[best] > cfg.gate_cost:
        return None
    return detections[best]


def _merwe_weights(n: int, alpha=1.0, beta=2.0, kappa=0.0):
    lam = alpha**2 * (n + kappa) - n
    w_m = np.full(2 * n + 1, 1.0 / (2 * (n + lam)))
    w_c = w_m.copy()
    w_m[0] = lam / (n + lam)
    w_c[0] = w_m[0] + 1.0 - alpha**2 + beta
    return lam, w_m, w_c


def _sigma_points(x, cov, lam):
    n = len(x)
    sqrt_mat = np.linalg.cholesky((n + lam) * cov)
    pts = np.empty((2 * n + 1, n))
    pts[0] = x
    for i in range(n):
        pts[1 + i] = x + sqrt_mat[:, i]
        pts[1 + n + i] = x - sqrt_mat[:, i]
    return pts


def ukf_step(track: OpponentTrack, detection: DetectionCluster | None,
             dt: float, cfg: RadarConfig) -> OpponentTrack:
    """Sigma-point predict under the constant-velocity point-mass model;
    update only when a detection is present."""
    if dt <= 0:
        raise ConfigurationError("ukf dt must be positive")
    x = np.concatenate([track.pose, [track.velocity[0], track.velocity[1],
                                      track.v_z]])
    n = len(x)
    lam, w_m, w_c = _merwe_weights(n)

    try:
        pts = _sigma_points(x, track.cov, lam)
    except np.linalg.LinAlgError:
        if detection is None:
            return replace(track, age=track.age + dt,
                           time_since_update=track.time_since_update + dt)
        return init_track_from_detection(detection, cfg)

    # point-mass constant-velocity propagation
    prop = pts.copy()
    prop[:, 0:3] += pts[:, 3:6] * dt
    x_pred = w_m @ prop
    diff = prop - x_pred
    cov_pred = diff.T @ (w_c[:, None] * diff)
    cov_pred += np.diag([cfg.ukf_q_pos] * 3 + [cfg.ukf_q_vel] * 3) * dt
    cov_pred = 0.5 * (cov_pred + cov_pred.T)

    if detection is None:
        return replace(
            track,
            pose=x_pred[0:3], velocity=x_pred[3:5], v_z=float(x_pred[5]),
            cov=cov_pred, age=track.age + dt,
            time_since_update=track.time_since_update + dt)

    # measurement: 3D position, plus planar speed when the cluster carries one
    if detection.velocity is not None:
        def h(state):
            return np.array([state[0], state[1], state[2],
                             np.hypot(state[3], state[4])])

        z = np.array([detection.centroid[0], detection.centroid[1],
                      detection.centroid[2], detection.velocity])
        r_mat = np.diag([cfg.ukf_r_pos] * 3 + [cfg.ukf_r_vel])
    else:
        def h(state):
            return state[0:3]

        z = detection.centroid.astype(float)
        r_mat = np.diag([cfg.ukf_r_pos] * 3)

    pts2 = _sigma_points(x_pred, cov_pred, lam)
    zs = np.array([h(p) for p in pts2])
    z_pred = w_m @ zs
    dz = zs - z_pred
    dx = pts2 - x_pred
    s_mat = dz.T @ (w_c[:, None] * dz) + r_mat
    c_mat = dx.T @ (w_c[:, None] * dz)
    gain = c_mat @ np.linalg.inv(s_mat)
    x_new = x_pred + gain @ (z - z_pred)
    cov_new = cov_pred - gain @ s_mat @ gain.T
    cov_new = 0.5 * (cov_new + cov_new.T)

    return replace(
        track,
        pose=x_new[0:3], velocity=x_new[3:5], v_z=float(x_new[5]),
        cov=cov_new, age=track.age + dt, time_since_update=0.0)


def init_track_from_detection(detection: DetectionCluster,
                              cfg: RadarConfig) -> OpponentTrack:
    v0 = detection.velocity if detection.velocity is not None else 0.0
    cov = np.diag([cfg.ukf_r_pos * 4] * 3 + [4.0, 4.0, 0.1])
    return OpponentTrack(
        pose=detection.centroid.copy(),
        velocity=np.array([v0, 0.0]),
        cov=cov, age=0.0, time_since_update=0.0,
        v_smoothed=v0, speed_history=(v0,))


def stop_and_smooth(track: OpponentTrack, window: int, dt: float,
                    v_stop: float) -> OpponentTrack:
    """Moving-average velocity smoothing plus the stopping predicate
    (low smoothed speed while decelerating)."""
    if window < 1:
        raise ConfigurationError("smoothing window must be >= 1")
    history = (track.speed_history + (track.speed,))[-window:]
    v_smoothed = float(np.mean(history))
    accel = (v_smoothed - track.v_smoothed) / dt
    stopped = bool(v_smoothed < v_stop and accel < 0.0)
    return replace(track, v_smoothed=v_smoothed, stopped=stopped,
                   speed_history=history)


class OpponentTracker:
    """Per-frame pipeline wiring with single-track bookkeeping."""

    def __init__(self, cfg: RadarConfig | None = None):
        self.cfg = cfg or RadarConfig()
        self.track: OpponentTrack | None = None
        self.last_detection: DetectionCluster | None = None
        self.last_cost: float = float("nan")

    def process(self, points: list[RadarPoint], ego: VehicleState,
                track_model: TrackModel, t: float,
                dt: float) -> list[DetectionCluster]:
        cfg = self.cfg
        kept = quality_filter(points, cfg.thresholds)
        kept = static_filter(kept, np.array([ego.v_x, ego.v_y]), cfg.eps_static)
        labels = dbscan(radar_features(kept, cfg.v_r_scale), cfg.dbscan_eps,
                        cfg.dbscan_min_pts)
        detections = gate_clusters(kept, labels, ego, track_model, cfg, t)

        if self.track is None:
            self.last_detection = detections[0] if detections else None
            if self.last_detection is not None:
                self.track = init_track_from_detection(self.last_detection, cfg)
            return detections

        chosen = associate(detections, self.track, cfg)
        self.last_detection = chosen
        self.track = ukf_step(self.track, chosen, dt, cfg)
        self.track = stop_and_smooth(self.track, cfg.smoothing_window, dt,
                                     cfg.v_stop)
        if self.track.time_since_update > cfg.track_timeout:
            self.track = None
        return detections
