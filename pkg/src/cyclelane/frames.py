"""Transfer per-coordinate labels onto video frames, and apply manual overrides."""
from __future__ import annotations

import bisect
import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .errors import ParseError, ValidationError
from .matching import LabeledCoordinate
from .taxonomy import SubClass, parse_sub

log = logging.getLogger(__name__)

AUTO = "auto"
OVERRIDE = "override"


@dataclass(frozen=True)
class FrameStamp:
    frame_index: int
    timestamp: float


@dataclass(frozen=True)
class FrameLabel:
    frame_index: int
    sub_class: SubClass | None
    confidence: float
    source: str = AUTO


@dataclass(frozen=True)
class Override:
    start: int
    end: int
    sub_class: SubClass


def label_frames(coords, frames) -> list[FrameLabel]:
    """Interpolate labeled coordinates onto frame timestamps.

    Inside a bracket of two same-class coordinates the confidence is linearly
    interpolated. When the class changes, the switch happens at the midpoint
    and every frame strictly inside the bracket gets half the interpolated
    confidence. Frames outside the covered time span are unlabeled.
    """
    coords = list(coords)
    if not coords:
        log.warning("no labeled coordinates; all %d frames unlabeled", len(frames))
        return [FrameLabel(f.frame_index, None, 0.0) for f in frames]
    times = [c.point.timestamp for c in coords]
    out = []
    for f in frames:
        t = f.timestamp
        if t < times[0] or t > times[-1]:
            out.append(FrameLabel(f.frame_index, None, 0.0))
            continue
        j = bisect.bisect_left(times, t)
        if times[j] == t:
            c = coords[j]
            out.append(FrameLabel(f.frame_index, c.sub_class, c.confidence if c.sub_class is not None else 0.0))
            continue
        lo, hi = coords[j - 1], coords[j]
        t0, t1 = times[j - 1], times[j]
        w = (t - t0) / (t1 - t0)
        conf = (1.0 - w) * lo.confidence + w * hi.confidence
        if lo.sub_class == hi.sub_class:
            sub = lo.sub_class
        else:
            sub = lo.sub_class if t < 0.5 * (t0 + t1) else hi.sub_class
            conf *= 0.5
        if sub is None:
            conf = 0.0
        out.append(FrameLabel(f.frame_index, sub, conf))
    return out


def validate_overrides(overrides, n_frames=None):
    bad = []
    for o in overrides:
        if o.start < 0 or o.end < o.start or (n_frames is not None and o.end >= n_frames):
            bad.append(f"[{o.start}, {o.end}] out of range")
    ordered = sorted(overrides, key=lambda o: o.start)
    for a, b in zip(ordered, ordered[1:]):
        if b.start <= a.end:
            bad.append(f"[{a.start}, {a.end}] overlaps [{b.start}, {b.end}]")
    if bad:
        raise ValidationError("invalid overrides: " + "; ".join(bad))


def apply_overrides(labels, overrides) -> list[FrameLabel]:
    labels = list(labels)
    overrides = list(overrides)
    n = max((lab.frame_index for lab in labels), default=-1) + 1
    validate_overrides(overrides, n)
    out = []
    for lab in labels:
        hit = next((o for o in overrides if o.start <= lab.frame_index <= o.end), None)
        if hit is None:
            out.append(lab)
        else:
            out.append(FrameLabel(lab.frame_index, hit.sub_class, 1.0, OVERRIDE))
    return out


def read_frames(path) -> list[FrameStamp]:
    path = Path(path)
    try:
        fh = path.open(newline="")
    except FileNotFoundError:
        raise ValidationError(f"frames file not found: {path}") from None
    out = []
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"frame_index", "timestamp"} <= set(reader.fieldnames):
            raise ParseError(f"{path}: expected header frame_index,timestamp")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(FrameStamp(int(row["frame_index"]), float(row["timestamp"])))
            except (TypeError, ValueError):
                raise ParseError(f"{path}: line {lineno}: bad value") from None
    for a, b in zip(out, out[1:]):
        if b.frame_index <= a.frame_index or b.timestamp <= a.timestamp:
            raise ParseError(f"{path}: frames must be strictly increasing (frame {b.frame_index})")
    return out


def read_overrides(path) -> list[Override]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ValidationError(f"override file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, list):
        raise ParseError(f"{path}: expected a JSON list")
    out = []
    for i, entry in enumerate(doc):
        try:
            start, end = entry["frames"]
            out.append(Override(int(start), int(end), parse_sub(entry["sub_class"])))
        except (KeyError, TypeError, ValueError):
            raise ParseError(f"{path}: entry {i}: expected {{frames: [start, end], sub_class}}") from None
    return out


def write_labels(path, labels):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_index", "sub_class", "main_class", "confidence", "source"])
        for lab in labels:
            sub = lab.sub_class
            w.writerow([lab.frame_index, sub.label if sub is not None else "",
                        sub.parent.label if sub is not None else "",
                        f"{lab.confidence:.6f}", lab.source])


def read_labels(path) -> list[FrameLabel]:
    path = Path(path)
    try:
        fh = path.open(newline="")
    except FileNotFoundError:
        raise ValidationError(f"labels file not found: {path}") from None
    out = []
    with fh:
        reader = csv.DictReader(fh)
        need = {"frame_index", "sub_class", "confidence"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ParseError(f"{path}: expected header frame_index,sub_class,main_class,confidence,source")
        for lineno, row in enumerate(reader, start=2):
            try:
                idx = int(row["frame_index"])
                conf = float(row["confidence"])
            except (TypeError, ValueError):
                raise ParseError(f"{path}: line {lineno}: bad value") from None
            sub = parse_sub(row["sub_class"]) if row["sub_class"] else None
            out.append(FrameLabel(idx, sub, conf if sub is not None else 0.0, row.get("source") or AUTO))
    return out
