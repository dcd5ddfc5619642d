import copy

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from jsonpath_ng.ext import parse as ref_parse

from sensorstd.exceptions import PathSyntaxError, SetOnWildcard, TypeConflict
from sensorstd.jsonpath import (
    Child,
    Filter,
    Index,
    Root,
    Wildcard,
    get,
    leaf_paths,
    parse_path,
    render_path,
    set_value,
)

TABLE_INPUT = "$.sensor_data.Accelerometer.timestamp"
TABLE_OUTPUT = "$[?(@.name == 'Accelerometer')].time"

RAW = {
    "sensor_data": {
        "Accelerometer": {"timestamp": 1705307400, "x": 0.1, "y": 0.2, "z": 9.8},
        "Gyroscope": {"timestamp": 1705307401, "x": 0.01, "y": -0.02, "z": 0.0},
    },
    "device": {"id": "phone-7", "tags": ["a", "b", "c"], "meta": {"k": None, "v": True}},
    "readings": [{"name": "UWB", "pos": [1, 2, 3]}, {"name": "GNSS", "pos": [4, 5, 6]}, {"name": "UWB", "pos": [7, 8, 9]}],
    "by_id": {"p": {"k": "v", "n": 1}, "q": {"k": "w", "n": 2}, "r": {"k": "v", "n": 3}},
    "odd key": {"with'quote": 5},
}
STD = [
    {"name": "Accelerometer", "time": 5, "values": {"x": 1.0, "y": 2.0, "z": 3.0}},
    {"name": "UWB", "time": 6, "values": {"position": [1.0, 2.0, 3.0]}},
    {"name": "Pedometer", "time": 7, "steps": 12},
    {"name": 3, "time": 8},
]

CORPUS = [
    (RAW, TABLE_INPUT), (STD, TABLE_OUTPUT), (RAW, "$"), (STD, "$"),
    (RAW, "$.sensor_data"), (RAW, "$.sensor_data.Gyroscope.z"), (RAW, "$.sensor_data.*"),
    (RAW, "$.sensor_data.*.timestamp"), (RAW, "$.sensor_data.Magnetometer.x"), (RAW, "$.device.tags[0]"),
    (RAW, "$.device.tags[2]"), (RAW, "$.device.tags[-1]"), (RAW, "$.device.tags[5]"), (RAW, "$.device.tags[*]"),
    (RAW, "$.device.*"), (RAW, "$.device.meta.k"), (RAW, "$.device.meta.v"), (RAW, "$.device.meta.*"),
    (RAW, "$.readings[*].pos"), (RAW, "$.readings[*].pos[1]"), (RAW, "$.readings[?(@.name == 'UWB')].pos"),
    (RAW, "$.readings[?(@.name == 'GNSS')].pos[2]"), (RAW, "$.readings[?(@.name == 'none')]"),
    (RAW, "$.readings[1].name"), (RAW, "$.readings[-1].pos[-1]"), (RAW, "$.by_id[?(@.k == 'v')].n"),
    (RAW, "$.by_id[?(@.n == 2)].k"), (RAW, "$.by_id.*.n"), (RAW, "$['sensor_data']['Accelerometer']"),
    (RAW, "$['odd key']"), (RAW, "$.device['id']"), (RAW, "$.device.id.more"), (RAW, "$.device.tags.x"),
    (RAW, "$.readings[0]"), (RAW, "$.readings.name"), (RAW, "$.readings[*].name"), (RAW, "$.sensor_data.*.*"),
    (STD, "$[0]"), (STD, "$[0].values.z"), (STD, "$[*].time"), (STD, "$[*].values.x"),
    (STD, "$[?(@.name == 'UWB')].values.position[0]"), (STD, "$[?(@.name == 'Pedometer')].steps"),
    (STD, "$[?(@.name == 3)].time"), (STD, "$[?(@.time == 6)].name"), (STD, "$[?(@.name == 'Image')].image"),
    (STD, "$[-2].steps"), (STD, "$.name"), (STD, "$[*].values.*"), (STD, "$[?(@.name == 'Accelerometer')].values"),
]


def test_corpus_size_and_table_paths():
    assert len(CORPUS) == 50
    assert (RAW, TABLE_INPUT) in CORPUS and (STD, TABLE_OUTPUT) in CORPUS


@pytest.mark.parametrize("doc, path", CORPUS)
def test_agrees_with_reference_evaluator(doc, path):
    # the reference evaluator can rewrite filtered objects in place, so give it a copy
    expected = [m.value for m in ref_parse(path).find(copy.deepcopy(doc))]
    assert get(doc, path) == expected


def test_dot_wildcard_also_iterates_arrays():
    # the reference evaluator only expands ``.*`` over objects; here it means ``[*]``
    assert get(RAW, "$.device.tags.*") == get(RAW, "$.device.tags[*]") == ["a", "b", "c"]


def test_parse_examples():
    assert parse_path(TABLE_INPUT).segments == (Root(), Child("sensor_data"), Child("Accelerometer"),
                                                Child("timestamp"))
    assert parse_path(TABLE_OUTPUT).segments == (Root(), Filter("name", "Accelerometer"), Child("time"))
    assert parse_path("$").segments == (Root(),)
    assert parse_path("$.a[*][3]").segments == (Root(), Child("a"), Wildcard(), Index(3))


@pytest.mark.parametrize("text, offset", [
    ("", 0), ("a.b", 0), ("$..a", 2), ("$.a[", 4), ("$[?(@.a != 'x')]", 8), ('$[?(@.a == "x")]', 11),
    ("$.a[1:2]", 5), ("$[?(@.a == 'x' && @.b == 'y')]", 15), ("$.", 2), ("$[?(@.a == 'x)]", 15),
])
def test_syntax_errors_report_offset(text, offset):
    with pytest.raises(PathSyntaxError) as info:
        parse_path(text)
    assert info.value.offset == offset
    assert info.value.expected


def test_get_examples():
    assert get({"a": {"b": 1}}, "$.a.b") == [1]
    assert get([{"name": "Accelerometer", "time": 5}], TABLE_OUTPUT) == [5]
    assert get({"a": 1}, "$.zzz") == []


def test_set_examples():
    assert set_value({}, "$.a.b", 7) == {"a": {"b": 7}}
    out = set_value([], TABLE_OUTPUT, 5)
    assert out == [{"name": "Accelerometer", "time": 5}]
    assert get(out, TABLE_OUTPUT) == [5]
    assert set_value({"a": 1}, "$.a", 2) == {"a": 2}
    assert set_value([1], "$[3]", 4) == [1, None, None, 4]
    assert set_value(None, "$", 3) == 3


def test_set_errors():
    with pytest.raises(SetOnWildcard):
        set_value({}, "$.a[*].b", 1)
    with pytest.raises(TypeConflict):
        set_value({"a": 1}, "$.a.b", 2)
    with pytest.raises(TypeConflict):
        set_value({"a": {}}, "$.a[0]", 2)
    with pytest.raises(TypeConflict):
        set_value([], "$[?(@.name == 'X')]", 2)


def test_set_does_not_mutate_input():
    doc = copy.deepcopy(STD)
    set_value(doc, "$[?(@.name == 'UWB')].values.position[1]", 9.0)
    assert doc == STD


@pytest.mark.parametrize("doc, path", CORPUS)
def test_render_round_trip(doc, path):
    parsed = parse_path(path)
    assert parse_path(render_path(parsed)) == parsed


def test_leaf_paths_cover_every_scalar():
    leaves = list(leaf_paths(RAW))
    assert all(get(RAW, p) == [v] for p, v in leaves)
    assert len(leaves) == 33


# ---------------------------------------------------------------------------
# get/set coherence over randomized wildcard-free paths
# ---------------------------------------------------------------------------

KEYS = ["a", "b", "c", "name"]
NAMES = ["A", "B", "C"]


def _random_doc(rng, depth=0):
    r = rng.random()
    if depth >= 3 or r < 0.3:
        return [None, 1, 2.5, "s", True][rng.integers(5)]
    if r < 0.65:
        return {k: _random_doc(rng, depth + 1) for k in rng.choice(KEYS[:3], rng.integers(0, 4), replace=False)}
    names = list(rng.choice(NAMES, rng.integers(0, 4), replace=False))
    return [{"name": str(n), **{k: _random_doc(rng, depth + 1) for k in KEYS[:2] if rng.random() < 0.5}}
            for n in names]


def _random_path(rng, doc):
    """A wildcard-free path that mostly follows the shape of ``doc`` and sometimes leaves it."""
    segs = [Root()]
    node = doc
    for _ in range(rng.integers(1, 5)):
        if isinstance(node, dict) or node is None:
            key = str(rng.choice(KEYS[:3]))
            segs.append(Child(key))
            node = node.get(key) if isinstance(node, dict) else None
        elif isinstance(node, list):
            if rng.random() < 0.5:
                i = int(rng.integers(-len(node), len(node) + 2)) if node else int(rng.integers(0, 3))
                segs.append(Index(i))
                node = node[i] if -len(node) <= i < len(node) else None
            else:
                name = str(rng.choice(NAMES))
                key = str(rng.choice(KEYS[:2]))  # never rewrite the filter field itself
                segs += [Filter("name", name), Child(key)]
                hits = [e for e in node if isinstance(e, dict) and e.get("name") == name]
                node = hits[0].get(key) if hits else None
        else:
            break
    return render_path(_expr(segs))


def _expr(segs):
    from sensorstd.jsonpath import PathExpr

    return PathExpr(tuple(segs))


def test_get_set_coherence_randomized():
    rng = np.random.default_rng(20240115)
    ok = conflicts = 0
    for i in range(1000):
        doc = _random_doc(rng) if i % 2 else [{}, []][i % 4 // 2]
        before = copy.deepcopy(doc)
        path = _random_path(rng, doc)
        value = {"v": i} if i % 7 == 0 else i
        try:
            new = set_value(doc, path, value)
        except TypeConflict:
            conflicts += 1
            continue
        assert doc == before
        assert get(new, path) == [value], path
        ok += 1
    assert ok >= 900, (ok, conflicts)


@given(st.lists(st.sampled_from(["a", "b", "c"]), min_size=1, max_size=6), st.integers())
def test_get_set_coherence_on_empty_object(keys, value):
    path = "$." + ".".join(keys)
    assert get(set_value({}, path, value), path) == [value]
