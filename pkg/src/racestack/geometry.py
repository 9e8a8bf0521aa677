"""Planar geometry helpers shared by the track and perception modules."""

from __future__ import annotations

import numpy as np


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    w = -((-np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi)
    return float(w) if np.isscalar(a) or np.ndim(a) == 0 else w


def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area of a polygon (positive for CCW vertex order)."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def point_in_polygon(point, vertices: np.ndarray) -> bool:
    """Winding-number membership test for a simple polygon."""
    v = np.asarray(vertices, dtype=float)
    x, y = float(point[0]), float(point[1])
    x0, y0 = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    # Winding number from signed crossings of the horizontal ray through y.
    upward = (y0 <= y) & (y1 > y)
    downward = (y0 > y) & (y1 <= y)
    cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0)
    winding = int(np.sum(upward & (cross > 0))) - int(np.sum(downward & (cross < 0)))
    return winding != 0


def points_in_polygon(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Vectorized winding-number test; returns a boolean mask."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    v = np.asarray(vertices, dtype=float)
    x0, y0 = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    px = p[:, 0][:, None]
    py = p[:, 1][:, None]
    upward = (y0 <= py) & (y1 > py)
    downward = (y0 > py) & (y1 <= py)
    cross = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
    winding = np.sum(upward & (cross > 0), axis=1) - np.sum(downward & (cross < 0), axis=1)
    return winding != 0


def _cross2(u, v):
    return u[0] * v[1] - u[1] * v[0]


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1 = _cross2(q2 - q1, p1 - q1)
    d2 = _cross2(q2 - q1, p2 - q1)
    d3 = _cross2(p2 - p1, q1 - p1)
    d4 = _cross2(p2 - p1, q2 - p1)
    return bool(((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)))


def polygon_self_intersects(vertices: np.ndarray) -> bool:
    """True if any two non-adjacent edges of the polygon cross."""
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    edges = [(v[i], v[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue  # adjacent through the wrap
            if _segments_intersect(edges[i][0], edges[i][1], edges[j][0], edges[j][1]):
                return True
    return False


def arc_lengths(xy: np.ndarray) -> np.ndarray:
    """Cumulative arc length along a polyline, starting at zero."""
    xy = np.asarray(xy, dtype=float)
    seg = np.hypot(np.diff(xy[:, 0]), np.diff(xy[:, 1]))
    return np.concatenate(([0.0], np.cumsum(seg)))


def resample_polyline(xy: np.ndarray, step: float, closed: bool) -> tuple[np.ndarray, np.ndarray]:
    """Resample a polyline onto a uniform arc-length grid.

    Returns (s_grid, points). For closed polylines the duplicate endpoint is
    dropped so the grid covers [0, length) and wraps.
    """
    s = arc_lengths(xy)
    length = s[-1]
    if closed:
        # divide the loop evenly so the closing gap matches the step
        n = max(int(round(length / step)), 8)
        s_grid = np.linspace(0.0, length, n, endpoint=False)
    else:
        n = max(int(np.floor(length / step)) + 1, 2)
        s_grid = np.linspace(0.0, length, n)
    x = np.interp(s_grid, s, xy[:, 0])
    y = np.interp(s_grid, s, xy[:, 1])
    return s_grid, np.column_stack([x, y])


def heading_and_curvature(xy: np.ndarray, closed: bool) -> tuple[np.ndarray, np.ndarray]:
    """Heading and curvature from three-point finite differences.

    Assumes roughly uniform spacing; endpoints of open polylines use one-sided
    differences.
    """
    xy = np.asarray(xy, dtype=float)
    if closed:
        fwd = np.roll(xy, -1, axis=0) - xy
        bwd = xy - np.roll(xy, 1, axis=0)
    else:
        fwd = np.empty_like(xy)
        bwd = np.empty_like(xy)
        fwd[:-1] = xy[1:] - xy[:-1]
        fwd[-1] = fwd[-2]
        bwd[1:] = xy[1:] - xy[:-1]
        bwd[0] = bwd[1]
    mid = 0.5 * (fwd + bwd)
    heading = np.arctan2(mid[:, 1], mid[:, 0])
    ds = 0.5 * (np.hypot(fwd[:, 0], fwd[:, 1]) + np.hypot(bwd[:, 0], bwd[:, 1]))
    # curvature as the central difference of the point headings, so stored
    # kappa and any heading-based finite-difference check agree by stencil
    if closed:
        dpsi = wrap_angle(np.roll(heading, -1) - np.roll(heading, 1))
        span = np.hypot(fwd[:, 0], fwd[:, 1]) + np.hypot(bwd[:, 0], bwd[:, 1])
    else:
        dpsi = np.empty_like(heading)
        dpsi[1:-1] = wrap_angle(heading[2:] - heading[:-2])
        dpsi[0] = wrap_angle(heading[1] - heading[0])
        dpsi[-1] = wrap_angle(heading[-1] - heading[-2])
        span = np.empty_like(ds)
        span[1:-1] = ds[1:-1] * 2.0
        span[0] = ds[0]
        span[-1] = ds[-1]
    curvature = dpsi / np.maximum(span, 1e-12)
    return heading, curvature
