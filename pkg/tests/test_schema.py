import copy
import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fixtures import KINDS, T0, kind_pair
from sensorstd.exceptions import NegativeTimestamp, SchemaViolation, UnknownUnit, UnparseableTimestamp
from sensorstd.schema import (
    SchemaSet,
    SensorKind,
    StandardizedRecord,
    RawPayload,
    coerce_units,
    compatible_units,
    default_schema_set,
    dumps_doc,
    from_canonical,
    mark_missing,
    normalize_timestamp,
    schema_resource_text,
    sort_records,
)

import numpy as np


def days_from_civil(y: int, m: int, d: int) -> int:
    """Proleptic Gregorian day count from 1970-01-01, by counting whole years and months."""
    def leap(year):
        return year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)

    days = sum(366 if leap(yr) else 365 for yr in range(1970, y))
    month_len = [31, 29 if leap(y) else 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31]
    return days + sum(month_len[: m - 1]) + d - 1


# frozen from days_from_civil(2024, 1, 15) * 86400 + 8*3600 + 30*60
ISO_EXAMPLE_S = 1_705_307_400


def test_civil_oracle_frozen_value():
    assert days_from_civil(2024, 1, 15) * 86400 + 8 * 3600 + 30 * 60 == ISO_EXAMPLE_S


def test_iso_example_matches_calendar_oracle():
    assert normalize_timestamp("2024-01-15T08:30:00Z") == ISO_EXAMPLE_S * 10**9


@given(st.integers(1970, 2100), st.integers(1, 12), st.integers(1, 28), st.integers(0, 23),
       st.integers(0, 59), st.integers(0, 59), st.integers(0, 999_999_999))
def test_iso_strings_agree_with_day_counting(y, mo, d, h, mi, s, ns):
    text = f"{y:04d}-{mo:02d}-{d:02d}T{h:02d}:{mi:02d}:{s:02d}.{ns:09d}Z"
    expected = (days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s) * 10**9 + ns
    assert normalize_timestamp(text) == expected


@pytest.mark.parametrize("raw, expected", [
    (1705307400, 1705307400000000000),
    ("1970-01-01T00:00:00Z", 0),
    (1705307400123, 1705307400123000000),
    (1705307400123456, 1705307400123456000),
    (1705307400123456789, 1705307400123456789),
    (1705307400.25, 1705307400250000000),
    ("1705307400", 1705307400000000000),
    ("2024-01-15T09:30:00+01:00", 1705307400000000000),
    ("2024-01-15 08:30:00.5", 1705307400500000000),
])
def test_normalize_timestamp_examples(raw, expected):
    assert normalize_timestamp(raw) == expected


def test_magnitude_boundaries():
    assert normalize_timestamp(10**11 - 1) == (10**11 - 1) * 10**9
    assert normalize_timestamp(10**11) == 10**11 * 10**6
    assert normalize_timestamp(10**14) == 10**14 * 10**3
    assert normalize_timestamp(10**17) == 10**17


@pytest.mark.parametrize("raw", ["yesterday", "2024-13-01T00:00:00Z", "", None, True, float("nan"), [1]])
def test_unparseable(raw):
    with pytest.raises(UnparseableTimestamp):
        normalize_timestamp(raw)


@pytest.mark.parametrize("raw", [-1, -0.5, "1969-12-31T23:59:59Z"])
def test_negative(raw):
    with pytest.raises(NegativeTimestamp):
        normalize_timestamp(raw)


@given(st.integers(10**17, 4 * 10**18))
def test_idempotent_on_nanoseconds(ns):
    assert normalize_timestamp(ns) == ns
    assert normalize_timestamp(normalize_timestamp(ns)) == ns


def test_coerce_units_examples():
    assert coerce_units("Accelerometer", "x", 1.0, "g") == 9.80665
    assert coerce_units("Gyroscope", "z", 180.0, "deg/s") == pytest.approx(math.pi, rel=1e-15)
    assert coerce_units("Barometer", "pressure", 1013.25, "hPa") == 1013.25
    assert coerce_units("Accelerometer", "x", 3.5) == 3.5


def test_unknown_unit():
    with pytest.raises(UnknownUnit):
        coerce_units("Accelerometer", "x", 1.0, "furlongs/fortnight^2")
    with pytest.raises(UnknownUnit):
        coerce_units("Accelerometer", "x", 1.0, "deg/s")


_UNIT_CASES = [(k, f, u) for k, f in [("Accelerometer", "x"), ("Gyroscope", "y"), ("Magnetometer", "z"),
                                       ("Barometer", "pressure"), ("Location", "speed"), ("Location", "altitude")]
               for u in compatible_units(k, f)]


@pytest.mark.parametrize("kind, field, unit", _UNIT_CASES)
@given(value=st.floats(-1e6, 1e6, allow_nan=False))
def test_coerce_inverse_round_trip(kind, field, unit, value):
    back = from_canonical(kind, field, coerce_units(kind, field, value, unit), unit)
    assert back == pytest.approx(value, rel=1e-12, abs=1e-300)


def test_mark_missing_examples():
    assert mark_missing("Accelerometer", {"x": 1.0, "y": 2.0}) == {"x": 1.0, "y": 2.0, "z": None}
    full = {"x": 1.0, "y": 2.0, "z": 3.0}
    assert mark_missing("Accelerometer", full) == full
    assert mark_missing("Accelerometer", {}) == {"x": None, "y": None, "z": None}


def test_marked_record_fails_validation():
    rec = {"name": "Accelerometer", "time": T0, "values": mark_missing("Accelerometer", {"x": 1.0})}
    with pytest.raises(SchemaViolation):
        StandardizedRecord.from_dict(rec)


def test_schema_covers_exactly_the_eleven_kinds():
    schemas = default_schema_set()
    assert sorted(k.value for k in schemas.kinds) == sorted(KINDS)
    assert [k.value for k in SensorKind] == list(KINDS)


def test_schema_resource_round_trip():
    doc = json.loads(schema_resource_text())
    assert SchemaSet.from_document(doc).to_document() == doc


def test_literal_top_level_keys():
    s = default_schema_set()
    assert s["Pedometer"].top_level_keys == ("name", "time", "steps")
    assert s["Image"].top_level_keys == ("name", "time", "image")
    assert s["UWB"].top_level_keys == ("name", "time", "values")


def _field_removals(rec):
    if "values" in rec:
        for key in rec["values"]:
            r = copy.deepcopy(rec)
            del r["values"][key]
            yield key, r
    for key in ("time",) + tuple(k for k in rec if k not in ("name", "time", "values")):
        r = copy.deepcopy(rec)
        del r[key]
        yield key, r


@pytest.mark.parametrize("kind", KINDS)
def test_each_kind_constructs_and_rejects_one_removal(kind):
    _, _, rec = kind_pair(kind, np.random.default_rng(3), T0)
    parsed = StandardizedRecord.from_dict(rec)
    assert parsed.to_dict() == rec
    for _, broken in _field_removals(rec):
        with pytest.raises(SchemaViolation):
            StandardizedRecord.from_dict(broken)


def test_raw_payload_invariants():
    RawPayload("s", 1, {"a": [1, None, True, "x", 1.5]})
    with pytest.raises(ValueError):
        RawPayload("s", 0, {})
    with pytest.raises(TypeError):
        RawPayload("s", 1.5, {})
    with pytest.raises(ValueError):
        RawPayload("s", 1, {"a": float("inf")})
    with pytest.raises(ValueError):
        RawPayload.from_json("s", 1, "{not json")


_json = st.recursive(
    st.none() | st.booleans() | st.integers(-2**53, 2**53) | st.floats(allow_nan=False, allow_infinity=False)
    | st.text(max_size=8),
    lambda kids: st.lists(kids, max_size=4) | st.dictionaries(st.text(max_size=5), kids, max_size=4),
    max_leaves=20,
)


def _same_bits(a, b):
    if isinstance(a, float):
        return isinstance(b, float) and a.hex() == b.hex()
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(_same_bits(a[k], b[k]) for k in a)
    if isinstance(a, list):
        return len(a) == len(b) and all(_same_bits(x, y) for x, y in zip(a, b))
    return a == b and type(a) is type(b)


@given(_json)
def test_serialization_round_trip_preserves_bits(doc):
    assert _same_bits(json.loads(dumps_doc(doc)), doc)


def test_sort_records_is_stable():
    recs = [{"name": "A", "time": 2}, {"name": "B", "time": 1}, {"name": "C", "time": 2}]
    assert [r["name"] for r in sort_records(recs)] == ["B", "A", "C"]
