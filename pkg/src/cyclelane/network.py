"""Road-network extract ingestion, tag classification and the segment grid index."""
from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from . import taxonomy
from .errors import ParseError, ValidationError
from .geometry import GeoOrigin, Segment2D, segment_distance, to_local_plane
from .taxonomy import MainClass, SubClass

log = logging.getLogger(__name__)

INDEX_FORMAT_VERSION = 1
DEFAULT_CELL_SIZE = 100.0


@dataclass
class Way:
    way_id: int
    coords: list[tuple[float, float]]  # (lat, lon)
    tags: dict[str, str]


@dataclass
class NetworkExtract:
    ways: list[Way] = field(default_factory=list)
    skipped: int = 0


@dataclass(frozen=True)
class ClassifiedSegment:
    segment: Segment2D
    way_id: int
    sub_class: SubClass

    @property
    def main_class(self) -> MainClass:
        return self.sub_class.parent


def load_extract(path) -> NetworkExtract:
    """Read a GeoJSON FeatureCollection of LineStrings; properties become tags.

    Non-LineString features and LineStrings with fewer than two coordinates are
    skipped and counted in ``NetworkExtract.skipped``.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ValidationError(f"extract not found: {path}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return parse_extract(doc, source=str(path))


def parse_extract(doc, source="<extract>") -> NetworkExtract:
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise ParseError(f"{source}: expected a GeoJSON FeatureCollection")
    features = doc.get("features")
    if not isinstance(features, list):
        raise ParseError(f"{source}: 'features' must be a list")
    extract = NetworkExtract()
    seen = set()
    for i, feat in enumerate(features):
        where = f"{source}: feature {i}"
        if not isinstance(feat, dict):
            raise ParseError(f"{where}: not an object")
        geom = feat.get("geometry") or {}
        if geom.get("type") != "LineString":
            extract.skipped += 1
            continue
        coords = geom.get("coordinates")
        if not isinstance(coords, list):
            raise ParseError(f"{where}: coordinates must be a list")
        if len(coords) < 2:
            extract.skipped += 1
            continue
        try:
            # GeoJSON order is [lon, lat]
            latlon = [(float(c[1]), float(c[0])) for c in coords]
        except (TypeError, ValueError, IndexError):
            raise ParseError(f"{where}: bad coordinate") from None
        if not all(math.isfinite(v) for ll in latlon for v in ll):
            raise ParseError(f"{where}: non-finite coordinate")
        props = feat.get("properties") or {}
        way_id = feat.get("id", props.get("way_id", props.get("@id", i)))
        try:
            way_id = int(way_id)
        except (TypeError, ValueError):
            raise ParseError(f"{where}: way id {way_id!r} is not an integer") from None
        if way_id in seen:
            raise ParseError(f"{where}: duplicate way id {way_id}")
        seen.add(way_id)
        tags = {str(k): str(v) for k, v in props.items() if v is not None}
        extract.ways.append(Way(way_id, latlon, tags))
    if extract.skipped:
        log.warning("%s: skipped %d non-way features", source, extract.skipped)
    return extract


# Ordered rule table; the first rule whose conditions all hold wins.
# A condition value of "*" means "tag present", a list means "any of".
DEFAULT_RULES = [
    {"match": {"cycleway": "track"}, "class": "protected_bike_lane"},
    {"match": {"highway": "cycleway", "separated": "yes"}, "class": "protected_bike_lane"},
    {"match": {"highway": "cycleway"}, "class": "dedicated_off_road_bike_path"},
    {"match": {"highway": ["path", "footway"], "bicycle": "yes"}, "class": "shared_off_road_path"},
    {"match": {"cycleway": "lane", "buffer": "both"}, "class": "buffered_both"},
    {"match": {"buffer": "kerb-side"}, "class": "buffered_kerb_side"},
    {"match": {"buffer": "road-side"}, "class": "buffered_road_side"},
    {"match": {"cycleway": "lane"}, "class": "painted_bike_lane"},
    {"match": {"cycleway": "shared_lane"}, "class": "sharrow"},
    {"match": {"highway": "living_street"}, "class": "shared_zone"},
    {"match": {"lanes:bus": "*"}, "class": "bus_lane"},
    {"match": {"shoulder": "yes"}, "class": "shoulder"},
    {"match": {"highway": "*"}, "class": "mixed_traffic"},
]


class RuleTable:
    def __init__(self, rules=None):
        rules = DEFAULT_RULES if rules is None else rules
        self.rules = []
        for i, rule in enumerate(rules):
            try:
                match = dict(rule["match"])
                sub = taxonomy.parse_sub(rule["class"])
            except (KeyError, TypeError) as exc:
                raise ValidationError(f"rule {i}: malformed ({exc})") from None
            self.rules.append((match, sub))

    @classmethod
    def from_file(cls, path) -> "RuleTable":
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ValidationError(f"rules file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        if isinstance(doc, dict):
            doc = doc.get("rules")
        if not isinstance(doc, list):
            raise ParseError(f"{path}: expected a list of rules")
        return cls(doc)

    def classify(self, tags) -> SubClass | None:
        for match, sub in self.rules:
            if all(_holds(tags, k, v) for k, v in match.items()):
                return sub
        return None


def _holds(tags, key, want) -> bool:
    if key not in tags:
        return False
    if want == "*":
        return True
    if isinstance(want, list):
        return tags[key] in want
    return tags[key] == want


_DEFAULT_TABLE = RuleTable()


def classify_way(tags, rules: RuleTable | None = None) -> SubClass | None:
    """Sub-class for a tag map, or None when no rule matches."""
    return (rules or _DEFAULT_TABLE).classify(tags)


def extract_origin(extract: NetworkExtract) -> GeoOrigin:
    """Centroid of every node in the extract; (0, 0) for an empty extract."""
    if not extract.ways:
        return GeoOrigin(0.0, 0.0)
    lats = [c[0] for w in extract.ways for c in w.coords]
    lons = [c[1] for w in extract.ways for c in w.coords]
    return GeoOrigin.centroid(lats, lons)


class SegmentIndex:
    """Uniform grid over classified segments.

    Each segment is registered in every cell its bounding box overlaps, so a
    radius query that scans the cells covering the query box returns a superset
    of the segments within that radius.
    """

    def __init__(self, segments, origin: GeoOrigin, cell_size=DEFAULT_CELL_SIZE):
        if cell_size <= 0:
            raise ValidationError("cell size must be positive")
        self.segments: list[ClassifiedSegment] = list(segments)
        self.origin = origin
        self.cell_size = float(cell_size)
        self.cells: dict[tuple[int, int], list[int]] = defaultdict(list)
        for i, cs in enumerate(self.segments):
            (ax, ay), (bx, by) = cs.segment.a, cs.segment.b
            for cell in self._cells_in_box(min(ax, bx), min(ay, by), max(ax, bx), max(ay, by)):
                self.cells[cell].append(i)

    def __len__(self):
        return len(self.segments)

    def _cell(self, x, y):
        return (math.floor(x / self.cell_size), math.floor(y / self.cell_size))

    def _cells_in_box(self, x0, y0, x1, y1):
        i0, j0 = self._cell(x0, y0)
        i1, j1 = self._cell(x1, y1)
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                yield (i, j)

    def cell_candidates(self, x, y) -> list[int]:
        return list(self.cells.get(self._cell(x, y), ()))

    def query(self, p, radius) -> list[int]:
        """Ids of segments that may lie within ``radius`` of ``p`` (superset, sorted)."""
        found = set()
        for cell in self._cells_in_box(p[0] - radius, p[1] - radius, p[0] + radius, p[1] + radius):
            found.update(self.cells.get(cell, ()))
        return sorted(found)

    def within(self, p, radius) -> list[int]:
        return [i for i in self.query(p, radius)
                if segment_distance(p, self.segments[i].segment) <= radius]

    def to_dict(self) -> dict:
        return {
            "format": "cyclelane-index",
            "version": INDEX_FORMAT_VERSION,
            "origin": {"lat0": self.origin.lat0, "lon0": self.origin.lon0,
                       "earth_radius": self.origin.earth_radius},
            "cell_size": self.cell_size,
            "segments": [
                {"way_id": s.way_id, "sub_class": s.sub_class.label,
                 "a": list(s.segment.a), "b": list(s.segment.b)}
                for s in self.segments
            ],
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "SegmentIndex":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise ValidationError(f"index not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        if doc.get("format") != "cyclelane-index":
            raise ParseError(f"{path}: not an index file")
        if doc.get("version") != INDEX_FORMAT_VERSION:
            raise ParseError(f"{path}: unsupported index version {doc.get('version')}")
        o = doc["origin"]
        origin = GeoOrigin(o["lat0"], o["lon0"], o.get("earth_radius", 6_371_000.0))
        segs = [
            ClassifiedSegment(Segment2D(tuple(s["a"]), tuple(s["b"])), int(s["way_id"]),
                              taxonomy.parse_sub(s["sub_class"]))
            for s in doc["segments"]
        ]
        return cls(segs, origin, doc["cell_size"])


def build_index(extract: NetworkExtract, origin: GeoOrigin | None = None,
                cell_size=DEFAULT_CELL_SIZE, rules: RuleTable | None = None) -> SegmentIndex:
    """Split each classifiable way into consecutive node pairs and grid them.

    Consecutive duplicate nodes are dropped (they would give zero-length segments).
    """
    if origin is None:
        origin = extract_origin(extract)
    segments = []
    unclassified = 0
    for way in extract.ways:
        sub = classify_way(way.tags, rules)
        if sub is None:
            unclassified += 1
            continue
        lats = [c[0] for c in way.coords]
        lons = [c[1] for c in way.coords]
        xy = to_local_plane(lats, lons, origin)
        for k in range(len(xy) - 1):
            a, b = tuple(xy[k]), tuple(xy[k + 1])
            if a == b:
                continue
            segments.append(ClassifiedSegment(Segment2D(a, b), way.way_id, sub))
    if unclassified:
        log.info("excluded %d unclassifiable ways", unclassified)
    if not segments:
        log.warning("index is empty: no classifiable ways")
    return SegmentIndex(segments, origin, cell_size)
