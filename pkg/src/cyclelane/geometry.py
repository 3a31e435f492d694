"""Planar geometry for GPS-to-segment matching.

Points are ``(x, y)`` pairs in meters in a local east/north frame. Everything
here is a pure function over small tuples or numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FitError, GeometryError

EARTH_RADIUS = 6_371_000.0

# scoring constants for combined_distance
W_PERP = 1.0
W_COLIN = 2.0
EPSILON = 1.0


@dataclass(frozen=True)
class GeoOrigin:
    lat0: float
    lon0: float
    earth_radius: float = EARTH_RADIUS

    def __post_init__(self):
        if not (math.isfinite(self.lat0) and math.isfinite(self.lon0)):
            raise GeometryError("origin must be finite")
        if abs(self.lat0) > 90 or abs(self.lon0) > 180:
            raise GeometryError(f"origin out of range: ({self.lat0}, {self.lon0})")

    @classmethod
    def centroid(cls, lats, lons) -> "GeoOrigin":
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        if lats.size == 0:
            raise GeometryError("cannot take the centroid of no points")
        return cls(float(lats.mean()), float(lons.mean()))


@dataclass(frozen=True)
class Segment2D:
    a: tuple[float, float]
    b: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "a", (float(self.a[0]), float(self.a[1])))
        object.__setattr__(self, "b", (float(self.b[0]), float(self.b[1])))
        if not all(math.isfinite(v) for v in (*self.a, *self.b)):
            raise GeometryError("segment endpoints must be finite")
        if self.a == self.b:
            raise GeometryError(f"degenerate segment at {self.a}")

    @property
    def length(self) -> float:
        return math.hypot(self.b[0] - self.a[0], self.b[1] - self.a[1])

    def reversed(self) -> "Segment2D":
        return Segment2D(self.b, self.a)


@dataclass(frozen=True)
class FittedLine:
    """A line given by two distinct points on it."""

    p1: tuple[float, float]
    p2: tuple[float, float]

    def __post_init__(self):
        if tuple(self.p1) == tuple(self.p2):
            raise GeometryError("fitted line endpoints coincide")


def to_local_plane(lat, lon, origin: GeoOrigin):
    """Equirectangular projection around ``origin``; works on scalars or arrays."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(lon))):
        raise GeometryError("non-finite latitude/longitude")
    k = origin.earth_radius * math.pi / 180.0
    x = k * (lon - origin.lon0) * math.cos(math.radians(origin.lat0))
    y = k * (lat - origin.lat0)
    if x.ndim == 0:
        return (float(x), float(y))
    return np.stack([x, y], axis=-1)


def from_local_plane(x, y, origin: GeoOrigin):
    k = origin.earth_radius * math.pi / 180.0
    lat = origin.lat0 + y / k
    lon = origin.lon0 + x / (k * math.cos(math.radians(origin.lat0)))
    return lat, lon


def _direction(seg) -> tuple[float, float, float]:
    if isinstance(seg, FittedLine):
        a, b = seg.p1, seg.p2
    else:
        a, b = seg.a, seg.b
    dx, dy = b[0] - a[0], b[1] - a[1]
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        raise GeometryError("degenerate segment")
    return dx, dy, norm


def perpendicular_distance(p, seg: Segment2D) -> float:
    """Distance from ``p`` to the infinite line through ``seg``."""
    dx, dy, norm = _direction(seg)
    ax, ay = seg.a
    cross = dx * (ay - p[1]) - dy * (ax - p[0])
    return abs(cross) / norm


def project_point(p, seg: Segment2D) -> tuple[float, float]:
    """Orthogonal projection of ``p`` onto the line through ``seg``.

    The point is stepped by its perpendicular distance along the segment's unit
    normal. The normal's sign is ambiguous (90 vs 270 degree rotation), so both
    candidates are built and the one landing on the line is kept.
    """
    dx, dy, norm = _direction(seg)
    d = perpendicular_distance(p, seg)
    nx, ny = -dy / norm, dx / norm
    plus = (p[0] + d * nx, p[1] + d * ny)
    minus = (p[0] - d * nx, p[1] - d * ny)
    if perpendicular_distance(plus, seg) <= perpendicular_distance(minus, seg):
        return plus
    return minus


def projection_parameter(p, seg: Segment2D) -> float:
    """Position of p's projection along seg: 0 at ``a``, 1 at ``b``."""
    dx, dy, norm = _direction(seg)
    return ((p[0] - seg.a[0]) * dx + (p[1] - seg.a[1]) * dy) / (norm * norm)


def colinear_distance(p, seg: Segment2D) -> float:
    """How far p's projection lies beyond the nearer endpoint (0 if on the segment)."""
    q = project_point(p, seg)
    t = projection_parameter(q, seg)
    if 0.0 <= t <= 1.0:
        return 0.0
    da = math.hypot(q[0] - seg.a[0], q[1] - seg.a[1])
    db = math.hypot(q[0] - seg.b[0], q[1] - seg.b[1])
    return min(da, db)


def segment_distance(p, seg: Segment2D) -> float:
    """True Euclidean distance from p to the closed segment."""
    t = min(1.0, max(0.0, projection_parameter(p, seg)))
    cx = seg.a[0] + t * (seg.b[0] - seg.a[0])
    cy = seg.a[1] + t * (seg.b[1] - seg.a[1])
    return math.hypot(p[0] - cx, p[1] - cy)


def combined_distance(d_perp: float, d_colin: float, w_perp: float = W_PERP,
                      w_colin: float = W_COLIN, epsilon: float = EPSILON) -> float:
    if d_perp < 0 or d_colin < 0:
        raise GeometryError(f"distances must be non-negative, got {d_perp}, {d_colin}")
    return w_perp * d_perp + w_colin * d_colin + epsilon


def fit_local_line(samples) -> FittedLine:
    """Total-least-squares line through ``samples``.

    The axis is the principal eigenvector of the sample covariance. The returned
    endpoints are the first and last samples projected onto that axis, so the
    line keeps the direction of travel.
    """
    pts = np.asarray(samples, dtype=float).reshape(-1, 2)
    if len(pts) < 2 or np.all(pts == pts[0]):
        raise FitError("need at least two distinct samples to fit a line")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered / len(pts)
    _, vecs = np.linalg.eigh(cov)
    axis = vecs[:, -1]
    t1 = float(centered[0] @ axis)
    t2 = float(centered[-1] @ axis)
    if t1 == t2:
        # first and last sample project to the same spot (e.g. a loop); span the cloud instead
        proj = centered @ axis
        t1, t2 = float(proj.min()), float(proj.max())
    p1 = tuple(float(v) for v in centroid + t1 * axis)
    p2 = tuple(float(v) for v in centroid + t2 * axis)
    return FittedLine(p1, p2)


def angular_distance(l1, l2) -> float:
    """Acute angle in degrees between two lines, ignoring their orientation."""
    x1, y1, _ = _direction(l1)
    x2, y2, _ = _direction(l2)
    # atan2 stays accurate near 0 and 90 degrees, unlike acos of a dot product
    return math.degrees(math.atan2(abs(x1 * y2 - y1 * x2), abs(x1 * x2 + y1 * y2)))
