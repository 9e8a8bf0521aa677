"""Track model, boundary sets, Frenet projection, raceline optimization and speed profiling.

A track is described by a sampled centerline with per-sample half-widths and
banking. Boundary polygons are built by offsetting the centerline along its
left normal; membership on the track surface is the set difference of the two
polygon interiors. The raceline is obtained by a curvature-minimizing QP over
lateral offsets and annotated with a speed profile from lateral/longitudinal
acceleration limits.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, GeometryError, SchemaError
from .geometry import (
    arc_lengths,
    heading_and_curvature,
    point_in_polygon,
    polygon_area,
    polygon_self_intersects,
    resample_polyline,
    wrap_angle,
)

TRACK_CSV_COLUMNS = ("x_m", "y_m", "w_left_m", "w_right_m", "banking_rad")

MAX_BANKING_RAD = 0.44
CLOSURE_TOL = 1e-6


@dataclass(frozen=True)
class TrackModel:
    """Sampled track geometry with derived boundary polygons.

    ``centerline`` keeps the samples as loaded (closed tracks repeat the first
    sample at the end). ``inner_boundary`` is empty for open tracks, where the
    outer polygon is the ribbon formed by both offset boundaries.
    """

    centerline: np.ndarray
    width_left: np.ndarray
    width_right: np.ndarray
    banking: np.ndarray
    closed: bool
    inner_boundary: np.ndarray
    outer_boundary: np.ndarray

    @property
    def length(self) -> float:
        return float(arc_lengths(self.centerline)[-1])

    def banking_at(self, s) -> float:
        s_nodes = arc_lengths(self.centerline)
        return float(np.interp(np.mod(s, s_nodes[-1]) if self.closed else s,
                               s_nodes, self.banking))

    def half_widths_at(self, s) -> tuple[float, float]:
        s_nodes = arc_lengths(self.centerline)
        q = np.mod(s, s_nodes[-1]) if self.closed else s
        return (float(np.interp(q, s_nodes, self.width_left)),
                float(np.interp(q, s_nodes, self.width_right)))


@dataclass
class Raceline:
    """Reference line samples: arc length, position, heading, curvature, speed."""

    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    curvature: np.ndarray
    v: np.ndarray
    closed: bool
    length: float

    def __post_init__(self):
        self._points = np.column_stack([self.x, self.y])

    @property
    def points(self) -> np.ndarray:
        return self._points

    def _interp(self, s, values, angular=False):
        if self.closed:
            s = np.mod(s, self.length)
            grid = np.concatenate([self.s, [self.length]])
            ext = np.concatenate([values, [values[0]]])
        else:
            grid = self.s
            ext = values
        if angular:
            ext = np.unwrap(ext)
        out = np.interp(s, grid, ext)
        return wrap_angle(out) if angular else out

    def position_at(self, s) -> np.ndarray:
        return np.stack([self._interp(s, self.x), self._interp(s, self.y)], axis=-1)

    def heading_at(self, s):
        return self._interp(s, self.heading, angular=True)

    def curvature_at(self, s):
        return self._interp(s, self.curvature)

    def speed_at(self, s):
        return self._interp(s, self.v)


@dataclass(frozen=True)
class FrenetPose:
    """Curvilinear pose relative to a raceline: arc length, signed lateral
    offset (positive left of travel direction) and heading error."""

    s: float
    d: float
    heading_error: float


def _left_normals(points: np.ndarray, closed: bool) -> np.ndarray:
    heading, _ = heading_and_curvature(points, closed)
    return np.column_stack([-np.sin(heading), np.cos(heading)])


def load_track(path) -> TrackModel:
    """Load a track CSV (columns ``x_m,y_m,w_left_m,w_right_m,banking_rad``).

    Raises SchemaError for malformed files and GeometryError for
    self-intersecting or inverted boundaries.
    """
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(line for line in f if not line.lstrip().startswith("#"))
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty track file")
        header = [h.strip() for h in header]
        missing = [c for c in TRACK_CSV_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        idx = [header.index(c) for c in TRACK_CSV_COLUMNS]
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(row[i]) for i in idx])
            except (ValueError, IndexError) as exc:
                raise SchemaError(f"{path}:{lineno}: bad row {row!r}") from exc
    data = np.asarray(rows, dtype=float)
    if data.size == 0 or data.shape[0] < 3:
        raise SchemaError(f"{path}: need at least 3 samples")
    if not np.all(np.isfinite(data)):
        raise SchemaError(f"{path}: NaN or infinite values")
    return build_track(
        centerline=data[:, 0:2],
        width_left=data[:, 2],
        width_right=data[:, 3],
        banking=data[:, 4],
    )


def build_track(centerline, width_left, width_right, banking) -> TrackModel:
    """Construct a TrackModel from arrays, deriving boundary polygons."""
    centerline = np.asarray(centerline, dtype=float)
    width_left = np.asarray(width_left, dtype=float)
    width_right = np.asarray(width_right, dtype=float)
    banking = np.asarray(banking, dtype=float)
    if np.any(width_left <= 0) or np.any(width_right <= 0):
        raise SchemaError("track widths must be positive")
    if np.any(np.abs(banking) > MAX_BANKING_RAD):
        raise GeometryError(f"banking exceeds {MAX_BANKING_RAD} rad")
    seg = np.hypot(*np.diff(centerline, axis=0).T)
    if np.any(seg <= 0):
        raise GeometryError("centerline arc length must be strictly increasing")

    closed = bool(np.hypot(*(centerline[0] - centerline[-1])) <= CLOSURE_TOL)
    pts = centerline[:-1] if closed else centerline
    wl = width_left[:-1] if closed else width_left
    wr = width_right[:-1] if closed else width_right

    normals = _left_normals(pts, closed)
    left = pts + wl[:, None] * normals
    right = pts - wr[:, None] * normals

    if closed:
        for ring in (left, right):
            if polygon_self_intersects(ring):
                raise GeometryError("boundary polygon self-intersects")
        # The ring with larger enclosed area is the outer boundary.
        if abs(polygon_area(left)) >= abs(polygon_area(right)):
            outer, inner = left, right
        else:
            outer, inner = right, left
        if not all(point_in_polygon(p, outer) for p in inner):
            raise GeometryError("inner boundary not strictly inside outer boundary")
    else:
        # Open track: one ribbon polygon around the surface, no infield.
        outer = np.vstack([left, right[::-1]])
        if polygon_self_intersects(outer):
            raise GeometryError("boundary ribbon self-intersects")
        inner = np.empty((0, 2))

    return TrackModel(
        centerline=centerline,
        width_left=width_left,
        width_right=width_right,
        banking=banking,
        closed=closed,
        inner_boundary=inner,
        outer_boundary=outer,
    )


def boundary_contains(point, track: TrackModel) -> bool:
    """True iff the point lies on the track surface (inside the outer
    boundary and outside the inner one)."""
    if not point_in_polygon(point, track.outer_boundary):
        return False
    if track.inner_boundary.size and point_in_polygon(point, track.inner_boundary):
        return False
    return True


def centerline_raceline(track: TrackModel, step: float = 1.0) -> Raceline:
    """Raceline following the track centerline, resampled at ``step`` meters."""
    s_grid, pts = resample_polyline(track.centerline, step, track.closed)
    heading, curvature = heading_and_curvature(pts, track.closed)
    length = float(arc_lengths(track.centerline)[-1])
    return Raceline(
        s=s_grid, x=pts[:, 0], y=pts[:, 1], heading=heading,
        curvature=curvature, v=np.zeros(len(s_grid)),
        closed=track.closed, length=length,
    )


def frenet_project(pose, line: Raceline, hint: int | None = None,
                   window: int = 80) -> FrenetPose:
    """Project a pose (x, y, heading) onto the raceline.

    ``hint`` restricts the search to a window of segments around a previously
    known index, which the simulation loop uses to keep projection O(1).
    """
    x, y, psi = float(pose[0]), float(pose[1]), float(pose[2])
    p = np.array([x, y])
    pts = line.points
    n = len(pts)
    if line.closed:
        a = pts
        b = np.roll(pts, -1, axis=0)
        seg_s = line.s
    else:
        a = pts[:-1]
        b = pts[1:]
        seg_s = line.s[:-1]

    if hint is not None:
        m = len(a)
        idx = (np.arange(hint - window, hint + window + 1) % m) if line.closed \
            else np.clip(np.arange(hint - window, hint + window + 1), 0, m - 1)
        idx = np.unique(idx)
        a, b, seg_s = a[idx], b[idx], seg_s[idx]
    else:
        idx = np.arange(len(a))

    ab = b - a
    seg_len2 = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.maximum(seg_len2, 1e-12), 0.0, 1.0)
    proj = a + t[:, None] * ab
    dist2 = np.einsum("ij,ij->i", p - proj, p - proj)
    k = int(np.argmin(dist2))

    seg_len = np.sqrt(seg_len2[k])
    s = float(seg_s[k] + t[k] * seg_len)
    if line.closed:
        s = s % line.length
    tangent = ab[k] / max(seg_len, 1e-12)
    offset = p - proj[k]
    d = float(tangent[0] * offset[1] - tangent[1] * offset[0])
    heading_error = float(wrap_angle(psi - line.heading_at(s)))
    return FrenetPose(s=s, d=d, heading_error=heading_error)


def nearest_index(pose_xy, line: Raceline) -> int:
    """Index of the raceline sample nearest to a point (hint seed)."""
    diff = line.points - np.asarray(pose_xy, dtype=float)
    return int(np.argmin(np.einsum("ij,ij->i", diff, diff)))


def _second_difference_matrix(n: int, h: float, closed: bool) -> np.ndarray:
    d2 = np.zeros((n, n))
    i = np.arange(n)
    if closed:
        d2[i, i] = -2.0
        d2[i, (i + 1) % n] = 1.0
        d2[i, (i - 1) % n] = 1.0
    else:
        for j in range(1, n - 1):
            d2[j, j - 1] = 1.0
            d2[j, j] = -2.0
            d2[j, j + 1] = 1.0
    return d2 / h**2


def min_curvature_raceline(track: TrackModel, margin: float, step: float = 1.0,
                           reg: float = 1e-6, max_iter: int = 60) -> Raceline:
    """Geometry-only raceline minimizing integrated squared curvature.

    Lateral offsets per resampled centerline point are the decision variables;
    the curvature of the offset path is linearized as
    ``kappa_c + kappa_c^2 * alpha + alpha''`` and the resulting box-constrained
    least-squares problem is solved by an unconstrained-solve-then-clip
    active-set loop.
    """
    s_grid, pts = resample_polyline(track.centerline, step, track.closed)
    n = len(pts)
    heading, kappa_c = heading_and_curvature(pts, track.closed)
    normals = np.column_stack([-np.sin(heading), np.cos(heading)])

    s_nodes = arc_lengths(track.centerline)
    wl = np.interp(s_grid, s_nodes, track.width_left)
    wr = np.interp(s_grid, s_nodes, track.width_right)
    hi = wl - margin
    lo = -(wr - margin)
    if np.any(hi < 0) or np.any(lo > 0):
        raise ConfigurationError("margin exceeds track half-width")

    h = float(np.mean(np.diff(s_grid)))
    m_mat = _second_difference_matrix(n, h, track.closed) + np.diag(kappa_c**2)
    a_mat = m_mat.T @ m_mat + reg * np.eye(n)
    b_vec = -m_mat.T @ kappa_c

    alpha = np.zeros(n)
    clipped = np.zeros(n, dtype=bool)
    for _ in range(max_iter):
        free = ~clipped
        if free.any():
            rhs = b_vec[free] - a_mat[np.ix_(free, clipped)] @ alpha[clipped]
            alpha[free] = np.linalg.solve(a_mat[np.ix_(free, free)], rhs)
        newly = (alpha < lo) | (alpha > hi)
        alpha = np.clip(alpha, lo, hi)
        if newly.any():
            clipped |= newly
            continue
        # Release bound variables whose KKT multiplier has the wrong sign.
        grad = a_mat @ alpha - b_vec
        release = clipped & (((alpha == lo) & (grad < -1e-12)) |
                             ((alpha == hi) & (grad > 1e-12)))
        if not release.any():
            break
        clipped &= ~release

    new_pts = pts + alpha[:, None] * normals
    # re-parameterize by the optimized line's own arc length so samples stay
    # uniformly spaced
    if track.closed:
        closed_poly = np.vstack([new_pts, new_pts[:1]])
        length = float(arc_lengths(closed_poly)[-1])
        s_new, new_pts = resample_polyline(closed_poly, step, True)
    else:
        length = float(arc_lengths(new_pts)[-1])
        s_new, new_pts = resample_polyline(new_pts, step, False)
    new_heading, new_curv = heading_and_curvature(new_pts, track.closed)
    return Raceline(
        s=s_new, x=new_pts[:, 0], y=new_pts[:, 1], heading=new_heading,
        curvature=new_curv, v=np.zeros(len(new_pts)), closed=track.closed,
        length=length,
    )


def speed_profile(line: Raceline, v_cap: float, a_lat_max: float,
                  a_acc_max: float, a_brk_max: float) -> Raceline:
    """Attach speeds to a raceline: the pointwise lateral-acceleration limit
    tightened by forward (acceleration) and backward (braking) passes."""
    if min(v_cap, a_lat_max, a_acc_max, a_brk_max) <= 0:
        raise ConfigurationError("speed profile limits must be positive")
    kappa = np.abs(line.curvature)
    with np.errstate(divide="ignore"):
        v_lat = np.where(kappa > 1e-9, np.sqrt(a_lat_max / np.maximum(kappa, 1e-9)), np.inf)
    v = np.minimum(v_cap, v_lat)

    if line.closed:
        ds = np.diff(np.concatenate([line.s, [line.length]]))
    else:
        ds = np.diff(line.s)
    n = len(v)

    segs = range(n) if line.closed else range(n - 1)
    for _ in range(40 if line.closed else 1):
        changed = False
        for i in segs:  # forward, acceleration limit
            j = (i + 1) % n
            cap = np.sqrt(v[i] ** 2 + 2.0 * a_acc_max * ds[i])
            if v[j] > cap + 1e-12:
                v[j] = cap
                changed = True
        for i in reversed(segs):  # backward, braking limit
            j = (i + 1) % n
            cap = np.sqrt(v[j] ** 2 + 2.0 * a_brk_max * ds[i])
            if v[i] > cap + 1e-12:
                v[i] = cap
                changed = True
        if not changed:
            break

    return Raceline(
        s=line.s, x=line.x, y=line.y, heading=line.heading,
        curvature=line.curvature, v=v, closed=line.closed, length=line.length,
    )
