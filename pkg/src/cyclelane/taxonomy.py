"""Hierarchical cycling-infrastructure class scheme.

Five main classes, thirteen sub-classes. Integer ids follow listing order and
are used as confusion-matrix axes and in every serialized file.
"""
from __future__ import annotations

import enum
import json
import re

from .errors import TaxonomyError


class MainClass(enum.IntEnum):
    NO_INFRASTRUCTURE = 0
    PAINTED_BIKE_LANE = 1
    BUFFERED_BIKE_LANE = 2
    PROTECTED_BIKE_LANE = 3
    OFF_ROAD = 4

    @property
    def label(self) -> str:
        return self.name.lower()


class SubClass(enum.IntEnum):
    MIXED_TRAFFIC = 0
    SHOULDER = 1
    BUS_LANE = 2
    SHARED_ZONE = 3
    SHARROW = 4
    PAINTED_BIKE_LANE = 5
    BUFFERED_KERB_SIDE = 6
    BUFFERED_ROAD_SIDE = 7
    BUFFERED_BOTH = 8
    PROTECTED_BIKE_LANE = 9
    SHARED_OFF_ROAD_PATH = 10
    DEDICATED_OFF_ROAD_BIKE_PATH = 11
    OFF_PATH = 12

    @property
    def label(self) -> str:
        return self.name.lower()

    @property
    def parent(self) -> MainClass:
        return _PARENT[self]


N_MAIN = len(MainClass)
N_SUB = len(SubClass)

_GROUPS: dict[MainClass, tuple[SubClass, ...]] = {
    MainClass.NO_INFRASTRUCTURE: (
        SubClass.MIXED_TRAFFIC,
        SubClass.SHOULDER,
        SubClass.BUS_LANE,
        SubClass.SHARED_ZONE,
        SubClass.SHARROW,
    ),
    MainClass.PAINTED_BIKE_LANE: (SubClass.PAINTED_BIKE_LANE,),
    MainClass.BUFFERED_BIKE_LANE: (
        SubClass.BUFFERED_KERB_SIDE,
        SubClass.BUFFERED_ROAD_SIDE,
        SubClass.BUFFERED_BOTH,
    ),
    MainClass.PROTECTED_BIKE_LANE: (SubClass.PROTECTED_BIKE_LANE,),
    MainClass.OFF_ROAD: (
        SubClass.SHARED_OFF_ROAD_PATH,
        SubClass.DEDICATED_OFF_ROAD_BIKE_PATH,
        SubClass.OFF_PATH,
    ),
}
_PARENT = {s: m for m, subs in _GROUPS.items() for s in subs}

# sub id -> main id, as an integer lookup table for vectorized code
SUB_TO_MAIN = tuple(int(_PARENT[s]) for s in SubClass)
# main id -> tuple of sub ids
CHILDREN = tuple(tuple(int(s) for s in _GROUPS[m]) for m in MainClass)


def _normalize(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.strip().lower()).strip("_")


def parse_sub(name) -> SubClass:
    """Accepts a SubClass, an integer id, or a name in any spacing/case."""
    if isinstance(name, SubClass):
        return name
    if isinstance(name, int):
        try:
            return SubClass(name)
        except ValueError:
            raise TaxonomyError(f"unknown sub-class id: {name}") from None
    key = _normalize(str(name)).upper()
    try:
        return SubClass[key]
    except KeyError:
        raise TaxonomyError(f"unknown sub-class: {name!r}") from None


def parse_main(name) -> MainClass:
    if isinstance(name, MainClass):
        return name
    if isinstance(name, int):
        try:
            return MainClass(name)
        except ValueError:
            raise TaxonomyError(f"unknown main class id: {name}") from None
    key = _normalize(str(name)).upper()
    try:
        return MainClass[key]
    except KeyError:
        raise TaxonomyError(f"unknown main class: {name!r}") from None


def main_of(sub) -> MainClass:
    return _PARENT[parse_sub(sub)]


def subclasses_of(main) -> tuple[SubClass, ...]:
    return _GROUPS[parse_main(main)]


def to_dict() -> dict:
    return {
        "main_classes": [{"id": int(m), "name": m.label} for m in MainClass],
        "sub_classes": [
            {"id": int(s), "name": s.label, "parent": s.parent.label} for s in SubClass
        ],
    }


def dump_json() -> str:
    return json.dumps(to_dict(), indent=2)
