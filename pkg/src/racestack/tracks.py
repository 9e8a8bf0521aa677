"""Synthetic track fixtures: an oval and a road course.

Both are desk-scale layouts used by the test suite, the demo scripts and the
shipped scenarios. Parameters are not calibrated to any real venue.
"""

from __future__ import annotations

import numpy as np

from .track import TrackModel, build_track


def make_oval(straight=250.0, radius=80.0, width=10.0, banking=0.16,
              step=5.0) -> TrackModel:
    """Closed oval: two straights joined by two constant-radius turns.

    Turns are banked at ``banking`` radians, straights are flat, with a short
    linear blend at each transition.
    """
    pts, bank = [], []

    def add(p, b):
        pts.append(p)
        bank.append(b)

    n_straight = max(int(straight / step), 2)
    n_turn = max(int(np.pi * radius / step), 8)

    # bottom straight, heading +x
    for i in range(n_straight):
        add((i * straight / n_straight, 0.0), 0.0)
    # right turn (CCW half circle)
    for i in range(n_turn):
        a = -np.pi / 2 + np.pi * i / n_turn
        add((straight + radius * np.cos(a), radius + radius * np.sin(a)),
            banking * min(1.0, 4.0 * min(i, n_turn - i) / n_turn))
    # top straight, heading -x
    for i in range(n_straight):
        add((straight - i * straight / n_straight, 2 * radius), 0.0)
    # left turn
    for i in range(n_turn):
        a = np.pi / 2 + np.pi * i / n_turn
        add((radius * np.cos(a), radius + radius * np.sin(a)),
            banking * min(1.0, 4.0 * min(i, n_turn - i) / n_turn))
    add(pts[0], bank[0])  # close

    centerline = np.array(pts)
    n = len(centerline)
    return build_track(centerline, np.full(n, width), np.full(n, width),
                       np.array(bank))


def make_road_course(scale=140.0, width=7.0, step=4.0) -> TrackModel:
    """Closed road course with alternating left and right corners.

    Built as a radially perturbed circle, which yields sign-changing curvature
    (left and right turns) without boundary self-intersection.
    """
    length_guess = 2 * np.pi * scale
    n = max(int(length_guess / step), 64)
    theta = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    r = scale * (1.0 + 0.22 * np.cos(2 * theta) + 0.10 * np.sin(3 * theta))
    x = r * np.cos(theta)
    y = r * np.sin(theta)
    centerline = np.vstack([np.column_stack([x, y]), [[x[0], y[0]]]])
    m = len(centerline)
    return build_track(centerline, np.full(m, width), np.full(m, width),
                       np.zeros(m))


def save_track_csv(track: TrackModel, path) -> None:
    """Write a TrackModel in the track CSV schema."""
    header = "x_m,y_m,w_left_m,w_right_m,banking_rad"
    data = np.column_stack([
        track.centerline,
        track.width_left,
        track.width_right,
        track.banking,
    ])
    np.savetxt(path, data, delimiter=",", header=header, comments="",
               fmt="%.6f")
