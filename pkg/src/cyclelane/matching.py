"""Assign each GPS fix of a trajectory a sub-class and confidence."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, FitError, MatchingError, ParseError, ValidationError
from .geometry import (
    angular_distance,
    colinear_distance,
    combined_distance,
    fit_local_line,
    perpendicular_distance,
    to_local_plane,
)
from .network import ClassifiedSegment, SegmentIndex
from .taxonomy import SubClass

# trajectories further than this from the index origin are rejected
MAX_ORIGIN_OFFSET_DEG = 1.0


@dataclass(frozen=True)
class GpsPoint:
    timestamp: float
    lat: float
    lon: float


@dataclass
class Trajectory:
    id: str
    points: list[GpsPoint]

    def __post_init__(self):
        ts = [p.timestamp for p in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValidationError(f"trajectory {self.id}: timestamps must be strictly increasing")


@dataclass(frozen=True)
class MatchConfig:
    time_window: float = 3.0
    max_distance: float = 25.0
    max_angle: float = 30.0
    epsilon: float = 1.0
    w_perp: float = 1.0
    w_colin: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"match config: {f.name} must be positive, got {v!r}")
        if self.max_angle > 90:
            raise ConfigError("match config: max_angle must be at most 90 degrees")

    @classmethod
    def from_dict(cls, d) -> "MatchConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"match config: unknown keys {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class LabeledCoordinate:
    point: GpsPoint
    sub_class: SubClass | None
    confidence: float


def _planar(traj: Trajectory, index: SegmentIndex) -> np.ndarray:
    lats = np.array([p.lat for p in traj.points])
    lons = np.array([p.lon for p in traj.points])
    o = index.origin
    if (np.abs(lats.mean() - o.lat0) > MAX_ORIGIN_OFFSET_DEG
            or np.abs(lons.mean() - o.lon0) > MAX_ORIGIN_OFFSET_DEG):
        raise ConfigError(
            f"trajectory {traj.id} lies more than {MAX_ORIGIN_OFFSET_DEG} degrees from "
            f"the index origin ({o.lat0}, {o.lon0})")
    return to_local_plane(lats, lons, o).reshape(-1, 2)


def _propose(i, xy, times, index: SegmentIndex, cfg: MatchConfig) -> list[ClassifiedSegment]:
    p = tuple(xy[i])
    near = [index.segments[k] for k in index.within(p, cfg.max_distance)]
    window = np.abs(times - times[i]) <= cfg.time_window
    try:
        line = fit_local_line(xy[window])
    except FitError:
        return near
    return [s for s in near if angular_distance(line, s.segment) <= cfg.max_angle]


def propose_candidates(p: GpsPoint, traj: Trajectory, index: SegmentIndex,
                       cfg: MatchConfig = MatchConfig()) -> list[ClassifiedSegment]:
    """Segments near ``p`` that run roughly parallel to the local direction of travel."""
    try:
        i = traj.points.index(p)
    except ValueError:
        raise MatchingError("point does not belong to the trajectory") from None
    xy = _planar(traj, index)
    times = np.array([q.timestamp for q in traj.points])
    return _propose(i, xy, times, index, cfg)


def score_and_assign(p: GpsPoint, candidates, cfg: MatchConfig = MatchConfig(),
                     xy=None) -> LabeledCoordinate:
    """Pick a class from the proposed segments and attach a confidence.

    ``xy`` is p's planar position; it is only needed when candidates of more
    than one class compete.
    """
    candidates = list(candidates)
    if not candidates:
        return LabeledCoordinate(p, None, 0.0)
    classes = {c.sub_class for c in candidates}
    if len(classes) == 1:
        return LabeledCoordinate(p, classes.pop(), 1.0)
    if xy is None:
        raise MatchingError("planar position required to score competing candidates")
    dists = [
        combined_distance(perpendicular_distance(xy, c.segment), colinear_distance(xy, c.segment),
                          cfg.w_perp, cfg.w_colin, cfg.epsilon)
        for c in candidates
    ]
    total = math.fsum(dists)
    class_score: dict[SubClass, float] = {}
    for c, d in zip(candidates, dists):
        s = total / d
        if s > class_score.get(c.sub_class, -1.0):
            class_score[c.sub_class] = s
    # ties go to the lowest sub-class id
    best = min(class_score, key=lambda k: (-class_score[k], int(k)))
    confidence = class_score[best] / math.fsum(class_score.values())
    return LabeledCoordinate(p, best, confidence)


def classify_trajectory(traj: Trajectory, index: SegmentIndex,
                        cfg: MatchConfig = MatchConfig()) -> list[LabeledCoordinate]:
    if len(traj.points) < 2:
        raise MatchingError(f"trajectory {traj.id}: need at least 2 points, got {len(traj.points)}")
    xy = _planar(traj, index)
    times = np.array([q.timestamp for q in traj.points])
    out = []
    for i, p in enumerate(traj.points):
        cands = _propose(i, xy, times, index, cfg)
        out.append(score_and_assign(p, cands, cfg, xy=tuple(xy[i])))
    return out


def read_trajectory(path, traj_id=None) -> Trajectory:
    path = Path(path)
    try:
        fh = path.open(newline="")
    except FileNotFoundError:
        raise ValidationError(f"trajectory not found: {path}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"timestamp", "lat", "lon"} <= set(reader.fieldnames):
            raise ParseError(f"{path}: expected header timestamp,lat,lon")
        pts = []
        for lineno, row in enumerate(reader, start=2):
            try:
                pts.append(GpsPoint(float(row["timestamp"]), float(row["lat"]), float(row["lon"])))
            except (TypeError, ValueError):
                raise ParseError(f"{path}: line {lineno}: bad number") from None
    return Trajectory(traj_id or path.stem, pts)


def write_labeled(path, coords):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "lat", "lon", "sub_class", "main_class", "confidence"])
        for c in coords:
            sub = c.sub_class
            w.writerow([
                repr(c.point.timestamp), repr(c.point.lat), repr(c.point.lon),
                sub.label if sub is not None else "",
                sub.parent.label if sub is not None else "",
                f"{c.confidence:.6f}",
            ])


def read_labeled(path) -> list[LabeledCoordinate]:
    from .taxonomy import parse_sub

    path = Path(path)
    try:
        fh = path.open(newline="")
    except FileNotFoundError:
        raise ValidationError(f"labeled coordinates not found: {path}") from None
    out = []
    with fh:
        reader = csv.DictReader(fh)
        need = {"timestamp", "lat", "lon", "sub_class", "confidence"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ParseError(f"{path}: expected header {','.join(sorted(need))}")
        for lineno, row in enumerate(reader, start=2):
            try:
                pt = GpsPoint(float(row["timestamp"]), float(row["lat"]), float(row["lon"]))
                conf = float(row["confidence"])
            except (TypeError, ValueError):
                raise ParseError(f"{path}: line {lineno}: bad number") from None
            sub = parse_sub(row["sub_class"]) if row["sub_class"] else None
            out.append(LabeledCoordinate(pt, sub, conf if sub is not None else 0.0))
    return out
