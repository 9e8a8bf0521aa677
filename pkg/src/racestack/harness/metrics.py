"""Run metrics: cross-track and heading-error ranges, GG samples, jerk
aggregates, opponent-detection error statistics, the ACC gap trace and spin
events. Error conventions are estimate minus truth throughout."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..estimation import jerk_metrics


@dataclass
class RunMetrics:
    cte_min: float
    cte_max: float
    heading_error_min: float
    heading_error_max: float
    gg_samples: np.ndarray            # columns (a_y, a_x)
    heading_jerk: float               # rad/s^3, mean |...|
    position_jerk: float              # m/s^3
    detection_velocity_error: tuple | None   # (mean, std), m/s
    detection_distance_error: tuple | None   # (mean, std), m
    estimate_deviation_max: float     # m, ||est - truth|| over the run
    acc_gap_trace: np.ndarray         # columns (t, gap), NaN when untracked
    spin_events: list = field(default_factory=list)   # [(t_start, t_end)]
    lap_metrics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "cte_min": self.cte_min,
            "cte_max": self.cte_max,
            "heading_error_min": self.heading_error_min,
            "heading_error_max": self.heading_error_max,
            "heading_jerk_rad_s3": self.heading_jerk,
            "heading_jerk_deg_s3": float(np.degrees(self.heading_jerk)),
            "position_jerk_m_s3": self.position_jerk,
            "detection_velocity_error": self.detection_velocity_error,
            "detection_distance_error": self.detection_distance_error,
            "estimate_deviation_max_m": self.estimate_deviation_max,
            "spin_events": self.spin_events,
            **self.lap_metrics,
        }


def spin_intervals(t: np.ndarray, alpha_f: np.ndarray, alpha_r: np.ndarray,
                   threshold: float) -> list:
    """Contiguous intervals where either axle slip angle magnitude exceeds
    the threshold."""
    over = (np.abs(alpha_f) > threshold) | (np.abs(alpha_r) > threshold)
    events = []
    start = None
    for i, flag in enumerate(over):
        if flag and start is None:
            start = t[i]
        elif not flag and start is not None:
            events.append((float(start), float(t[i])))
            start = None
    if start is not None:
        events.append((float(start), float(t[-1])))
    return events


def compute_metrics(log, alpha_spin: float | None = None) -> RunMetrics:
    frames = log.frames
    if not frames:
        raise ValueError("empty run log")
    if alpha_spin is None:
        alpha_spin = log.scenario.metrics.alpha_spin

    t = np.array([f.t for f in frames])
    d = np.array([f.frenet["d"] for f in frames])
    he = np.array([f.frenet["heading_error"] for f in frames])
    gg = np.column_stack([[f.a_y for f in frames], [f.a_x for f in frames]])
    alpha_f = np.array([f.alpha_f for f in frames])
    alpha_r = np.array([f.alpha_r for f in frames])

    est_xy = np.column_stack([[f.est["x"] for f in frames],
                              [f.est["y"] for f in frames]])
    est_yaw = np.array([f.est["yaw"] for f in frames])
    truth_xy = np.column_stack([[f.ego["x"] for f in frames],
                                [f.ego["y"] for f in frames]])
    deviation = np.linalg.norm(est_xy - truth_xy, axis=1)

    jerk = jerk_metrics(t, est_xy, est_yaw) if len(frames) >= 4 else None

    vel_err = None
    dist_err = None
    pairs = [(f.opp["track_v"], f.opp["truth_v"],
              np.hypot(f.opp["track_x"] - f.opp["truth_x"],
                       f.opp["track_y"] - f.opp["truth_y"]))
             for f in frames
             if f.opp is not None and "track_x" in f.opp
             and f.opp.get("time_since_update", 1.0) == 0.0]
    if pairs:
        v_err = np.array([p[0] - p[1] for p in pairs])
        d_err = np.array([p[2] for p in pairs])
        vel_err = (float(np.mean(v_err)), float(np.std(v_err)))
        dist_err = (float(np.mean(d_err)), float(np.std(d_err)))

    gap_trace = np.column_stack([
        t, [f.gap if f.gap is not None else np.nan for f in frames]])

    return RunMetrics(
        cte_min=float(np.min(d)), cte_max=float(np.max(d)),
        heading_error_min=float(np.min(he)), heading_error_max=float(np.max(he)),
        gg_samples=gg,
        heading_jerk=jerk.heading if jerk else 0.0,
        position_jerk=jerk.position if jerk else 0.0,
        detection_velocity_error=vel_err,
        detection_distance_error=dist_err,
        estimate_deviation_max=float(np.max(deviation)),
        acc_gap_trace=gap_trace,
        spin_events=spin_intervals(t, alpha_f, alpha_r, alpha_spin),
        lap_metrics={"tick_wall_ms_mean": float(np.mean(log.tick_wall_ms))
                     if log.tick_wall_ms else 0.0,
                     "tick_wall_ms_max": float(np.max(log.tick_wall_ms))
                     if log.tick_wall_ms else 0.0},
    )
