import json

import pytest

from cyclelane import taxonomy
from cyclelane.errors import TaxonomyError
from cyclelane.taxonomy import MainClass, SubClass, main_of, subclasses_of


@pytest.mark.parametrize("name, expected", [
    ("sharrow", MainClass.NO_INFRASTRUCTURE),
    ("painted bike lane", MainClass.PAINTED_BIKE_LANE),
    ("off path", MainClass.OFF_ROAD),
    ("buffered (kerb-side)", MainClass.BUFFERED_BIKE_LANE),
    ("Dedicated off-road bike path", MainClass.OFF_ROAD),
])
def test_main_of(name, expected):
    assert main_of(name) is expected


def test_unknown_subclass():
    with pytest.raises(TaxonomyError):
        main_of("gravel track")
    with pytest.raises(TaxonomyError):
        main_of(13)


def test_subclasses_of():
    assert subclasses_of(MainClass.BUFFERED_BIKE_LANE) == (
        SubClass.BUFFERED_KERB_SIDE, SubClass.BUFFERED_ROAD_SIDE, SubClass.BUFFERED_BOTH)
    assert subclasses_of("protected_bike_lane") == (SubClass.PROTECTED_BIKE_LANE,)


def test_partition():
    groups = [subclasses_of(m) for m in MainClass]
    assert [len(g) for g in groups] == [5, 1, 3, 1, 3]
    flat = [s for g in groups for s in g]
    assert len(flat) == len(set(flat)) == 13
    # declaration order matches ids
    assert [int(s) for s in flat] == list(range(13))


def test_membership_equivalence():
    for s in SubClass:
        for m in MainClass:
            assert (main_of(s) is m) == (s in subclasses_of(m))


def test_dense_ids():
    assert [int(m) for m in MainClass] == list(range(5))
    assert [int(s) for s in SubClass] == list(range(13))


def test_dump_roundtrip():
    doc = json.loads(taxonomy.dump_json())
    assert len(doc["main_classes"]) == 5
    assert len(doc["sub_classes"]) == 13
    assert doc["sub_classes"][6] == {"id": 6, "name": "buffered_kerb_side", "parent": "buffered_bike_lane"}
    for entry in doc["sub_classes"]:
        assert taxonomy.parse_sub(entry["name"]).parent.label == entry["parent"]
