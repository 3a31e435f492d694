"""Regenerate the pipeline fixtures in this directory.

Scene (local meters around a Melbourne CBD origin): an east-west street whose
painted lane ends at x=50, an off-road bike path 8 m north of it, a perpendicular
residential street, an untagged outline (unclassifiable) and a point feature.
A rider travels east 2 m north of the street centreline at 10 m/s.
"""
import csv
import json
from pathlib import Path

from cyclelane.geometry import GeoOrigin, from_local_plane

HERE = Path(__file__).parent
ORIGIN = GeoOrigin(-37.8136, 144.9631)


def ll(x, y):
    lat, lon = from_local_plane(x, y, ORIGIN)
    return [round(lon, 8), round(lat, 8)]


def line(way_id, pts, **tags):
    return {"type": "Feature", "id": way_id, "properties": tags,
            "geometry": {"type": "LineString", "coordinates": [ll(x, y) for x, y in pts]}}


features = [
    line(101, [(-200, 0), (-100, 0), (0, 0), (50, 0)], highway="residential", cycleway="lane"),
    line(102, [(-50, 8), (50, 8), (150, 8)], highway="cycleway"),
    line(103, [(0, -200), (0, -60), (0, 60), (0, 200)], highway="residential"),
    line(104, [(300, 300), (320, 300), (320, 320)], building="yes"),
    {"type": "Feature", "id": 105, "properties": {"amenity": "bench"},
     "geometry": {"type": "Point", "coordinates": ll(10, 10)}},
    line(106, [(900, 900), (950, 900)], highway="living_street"),
]
(HERE / "network.geojson").write_text(json.dumps({"type": "FeatureCollection", "features": features}, indent=1) + "\n")

with (HERE / "trajectory.csv").open("w", newline="") as fh:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["timestamp", "lat", "lon"])
    for t in range(31):
        lon, lat = ll(-150 + 10 * t, 2.0)
        w.writerow([float(t), lat, lon])

with (HERE / "frames.csv").open("w", newline="") as fh:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["frame_index", "timestamp"])
    for i in range(311):
        w.writerow([i, round(-0.5 + 0.1 * i, 3)])

(HERE / "overrides.json").write_text(json.dumps([{"frames": [0, 9], "sub_class": "painted_bike_lane"}]) + "\n")
