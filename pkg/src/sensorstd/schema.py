"""Canonical standardized sensor-record model.

The schema itself lives in ``data/standardized_schema.json`` and is loaded once
into a :class:`SchemaSet`. This module also holds the normalization helpers the
rest of the pipeline relies on: timestamps to UNIX nanoseconds, unit coercion
to the canonical unit of each field, and explicit marking of missing values.

Records travel through the pipeline as plain documents (``dict``), one per line
in newline-delimited files::

    {"name": "Accelerometer", "time": 1705307400000000000, "values": {"x": 0.1, "y": 0.2, "z": 9.8}}
    {"name": "Pedometer", "time": 1705307400000000000, "steps": 12}

:class:`StandardizedRecord` is a typed, validated view over one such document.
"""

from __future__ import annotations

import datetime as _dt
import enum
import json
import math
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

from .exceptions import NegativeTimestamp, SchemaViolation, UnknownUnit, UnparseableTimestamp

STANDARD_GRAVITY = 9.80665
NS_PER_S = 1_000_000_000
# record times below this are seconds/ms/us that were never scaled to ns
MIN_RECORD_TIME_NS = 10**15
QUATERNION_NORM_TOL = 1e-3


class SensorKind(str, enum.Enum):
    MAGNETOMETER = "Magnetometer"
    GYROSCOPE = "Gyroscope"
    ACCELEROMETER = "Accelerometer"
    GRAVITY = "Gravity"
    UWB = "UWB"
    BLUETOOTH = "Bluetooth"
    PEDOMETER = "Pedometer"
    ORIENTATION = "Orientation"
    BAROMETER = "Barometer"
    LOCATION = "Location"
    IMAGE = "Image"

    def __str__(self) -> str:
        return self.value


# ---------------------------------------------------------------------------
# schema set
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldSpec:
    name: str
    type: str  # number | integer | vector3 | string
    unit: str | None = None
    minimum: float | None = None
    maximum: float | None = None


@dataclass(frozen=True)
class KindSpec:
    kind: SensorKind
    container: str | None
    fields: dict[str, FieldSpec]
    constraint: str | None = None

    @property
    def top_level_keys(self) -> tuple[str, ...]:
        if self.container is None:
            return ("name", "time", *self.fields)
        return ("name", "time", self.container)


@dataclass(frozen=True)
class SchemaSet:
    version: str
    kinds: dict[SensorKind, KindSpec]

    def __getitem__(self, kind) -> KindSpec:
        return self.kinds[SensorKind(kind)]

    def __contains__(self, name) -> bool:
        try:
            return SensorKind(name) in self.kinds
        except ValueError:
            return False

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "SchemaSet":
        kinds = {}
        for name, spec in doc["kinds"].items():
            kind = SensorKind(name)
            fields = {
                fname: FieldSpec(
                    name=fname,
                    type=fspec["type"],
                    unit=fspec.get("unit"),
                    minimum=fspec.get("minimum"),
                    maximum=fspec.get("maximum"),
                )
                for fname, fspec in spec["fields"].items()
            }
            kinds[kind] = KindSpec(kind, spec.get("container"), fields, spec.get("constraint"))
        missing = set(SensorKind) - set(kinds)
        if missing:
            raise ValueError(f"schema document lacks kinds: {sorted(k.value for k in missing)}")
        return cls(version=doc.get("version", "unknown"), kinds=kinds)

    def to_document(self) -> dict:
        kinds = {}
        for kind, spec in self.kinds.items():
            entry: dict[str, Any] = {"container": spec.container}
            if spec.constraint:
                entry["constraint"] = spec.constraint
            entry["fields"] = {}
            for f in spec.fields.values():
                fd: dict[str, Any] = {"type": f.type, "unit": f.unit}
                if f.minimum is not None:
                    fd["minimum"] = f.minimum
                if f.maximum is not None:
                    fd["maximum"] = f.maximum
                entry["fields"][f.name] = fd
            kinds[kind.value] = entry
        return {"version": self.version, "kinds": kinds}


def schema_resource_text() -> str:
    return resources.files("sensorstd").joinpath("data/standardized_schema.json").read_text("utf-8")


@lru_cache(maxsize=1)
def default_schema_set() -> SchemaSet:
    """The packaged schema set (cached; SchemaSet is immutable)."""
    return SchemaSet.from_document(json.loads(schema_resource_text()))


# ---------------------------------------------------------------------------
# payload / record containers
# ---------------------------------------------------------------------------


def _check_tree(node: Any, path: str = "") -> None:
    if node is None or isinstance(node, (bool, int, str)):
        return
    if isinstance(node, float):
        if not math.isfinite(node):
            raise ValueError(f"non-finite number at {path or '/'}")
        return
    if isinstance(node, Mapping):
        for key, value in node.items():
            if not isinstance(key, str):
                raise ValueError(f"non-string key {key!r} at {path or '/'}")
            _check_tree(value, f"{path}/{key}")
        return
    if isinstance(node, (list, tuple)):
        for i, value in enumerate(node):
            _check_tree(value, f"{path}/{i}")
        return
    raise ValueError(f"unsupported value of type {type(node).__name__} at {path or '/'}")


@dataclass(frozen=True)
class RawPayload:
    """One unstandardized entry as received from a source."""

    source_id: str
    received_at: int
    body: Any

    def __post_init__(self):
        if isinstance(self.received_at, bool) or not isinstance(self.received_at, int):
            raise TypeError("received_at must be integer UNIX nanoseconds")
        if self.received_at <= 0:
            raise ValueError("received_at must be positive")
        _check_tree(self.body)

    @classmethod
    def from_json(cls, source_id: str, received_at: int, text: str | bytes) -> "RawPayload":
        return cls(source_id, received_at, json.loads(text))


@dataclass(frozen=True)
class StandardizedRecord:
    name: SensorKind
    time: int
    payload: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], schemas: SchemaSet | None = None) -> "StandardizedRecord":
        from .validation import validate_record

        report = validate_record(doc, schemas)
        if not report.valid:
            raise SchemaViolation(report)
        kind = SensorKind(doc["name"])
        spec = (schemas or default_schema_set())[kind]
        if spec.container is None:
            payload = {k: doc[k] for k in spec.fields}
        else:
            payload = dict(doc[spec.container])
        return cls(kind, doc["time"], payload)

    def to_dict(self) -> dict:
        spec = default_schema_set()[self.name]
        doc: dict[str, Any] = {"name": self.name.value, "time": self.time}
        if spec.container is None:
            doc.update(self.payload)
        else:
            doc[spec.container] = dict(self.payload)
        return doc


# ---------------------------------------------------------------------------
# timestamps
# ---------------------------------------------------------------------------

_ISO_RE = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})"
    r"(?:[T ](\d{2}):(\d{2})(?::(\d{2})(?:[.,](\d{1,9}))?)?)?"
    r"\s*(Z|[+-]\d{2}:?\d{2})?$",
    re.IGNORECASE,
)
_EPOCH = _dt.datetime(1970, 1, 1, tzinfo=_dt.timezone.utc)


def _scale_numeric(value: Decimal) -> int:
    if value < 0:
        raise NegativeTimestamp(f"negative timestamp {value}")
    if value < Decimal(10) ** 11:
        ns = value * NS_PER_S
    elif value < Decimal(10) ** 14:
        ns = value * 1_000_000
    elif value < Decimal(10) ** 17:
        ns = value * 1_000
    else:
        ns = value
    return int(ns.to_integral_value())


def _parse_iso(text: str) -> int:
    m = _ISO_RE.match(text)
    if m is None:
        raise UnparseableTimestamp(f"not an ISO-8601 timestamp: {text!r}")
    year, month, day, hh, mm, ss, frac, tz = m.groups()
    try:
        dt = _dt.datetime(int(year), int(month), int(day), int(hh or 0), int(mm or 0), int(ss or 0))
    except ValueError as exc:
        raise UnparseableTimestamp(str(exc)) from None
    offset = _dt.timedelta(0)
    if tz and tz.upper() != "Z":
        sign = 1 if tz[0] == "+" else -1
        digits = tz[1:].replace(":", "")
        offset = sign * _dt.timedelta(hours=int(digits[:2]), minutes=int(digits[2:]))
    delta = dt.replace(tzinfo=_dt.timezone.utc) - offset - _EPOCH
    seconds = delta.days * 86400 + delta.seconds
    if seconds < 0:
        raise NegativeTimestamp(f"timestamp before the epoch: {text!r}")
    frac_ns = int((frac or "").ljust(9, "0")) if frac else 0
    return seconds * NS_PER_S + frac_ns


def normalize_timestamp(raw: int | float | str) -> int:
    """Convert a timestamp of unknown scale or format to UNIX nanoseconds.

    Numbers are scaled by magnitude: below 1e11 seconds, below 1e14
    milliseconds, below 1e17 microseconds, otherwise already nanoseconds.
    Strings are either numeric or ISO-8601 / RFC-3339 (naive times are UTC).
    """
    if isinstance(raw, bool):
        raise UnparseableTimestamp("boolean is not a timestamp")
    if isinstance(raw, int):
        return _scale_numeric(Decimal(raw))
    if isinstance(raw, float):
        if not math.isfinite(raw):
            raise UnparseableTimestamp(f"non-finite timestamp {raw!r}")
        # repr round-trips, so Decimal(repr) is the shortest exact decimal of the input
        return _scale_numeric(Decimal(repr(raw)))
    if isinstance(raw, str):
        text = raw.strip()
        try:
            number = Decimal(text)
        except InvalidOperation:
            return _parse_iso(text)
        if not number.is_finite():
            raise UnparseableTimestamp(f"non-finite timestamp {raw!r}")
        return _scale_numeric(number)
    raise UnparseableTimestamp(f"unsupported timestamp type {type(raw).__name__}")


# ---------------------------------------------------------------------------
# units
# ---------------------------------------------------------------------------

# canonical unit -> {declared unit: multiplicative factor to canonical}
UNIT_REGISTRY: dict[str, dict[str, float]] = {
    "m/s^2": {
        "m/s^2": 1.0, "m/s2": 1.0, "m/s²": 1.0, "m s^-2": 1.0,
        "g": STANDARD_GRAVITY, "mg": STANDARD_GRAVITY / 1000.0,
        "cm/s^2": 0.01, "gal": 0.01, "ft/s^2": 0.3048,
    },
    "rad/s": {
        "rad/s": 1.0, "deg/s": math.pi / 180.0, "dps": math.pi / 180.0,
        "rpm": 2.0 * math.pi / 60.0,
    },
    "uT": {
        "uT": 1.0, "µT": 1.0, "μT": 1.0, "nT": 1e-3, "mT": 1e3, "T": 1e6,
        "G": 100.0, "gauss": 100.0, "mG": 0.1,
    },
    "m": {"m": 1.0, "cm": 0.01, "mm": 1e-3, "km": 1000.0, "ft": 0.3048, "in": 0.0254},
    "mbar": {
        "mbar": 1.0, "mBar": 1.0, "hPa": 1.0, "Pa": 0.01, "kPa": 10.0,
        "bar": 1000.0, "atm": 1013.25, "inHg": 33.8638866667, "mmHg": 1.33322387415,
    },
    "m/s": {"m/s": 1.0, "km/h": 1.0 / 3.6, "kn": 1852.0 / 3600.0, "knots": 1852.0 / 3600.0, "mph": 0.44704},
    "deg": {"deg": 1.0, "°": 1.0, "degrees": 1.0, "rad": 180.0 / math.pi},
}


def canonical_unit(kind, field_name: str, schemas: SchemaSet | None = None) -> str | None:
    spec = (schemas or default_schema_set())[kind]
    try:
        return spec.fields[field_name].unit
    except KeyError:
        raise KeyError(f"{field_name!r} is not a field of {SensorKind(kind).value}") from None


def _factor(kind, field_name: str, declared_unit: str) -> float:
    unit = canonical_unit(kind, field_name)
    table = UNIT_REGISTRY.get(unit or "", {})
    if declared_unit == unit:
        return 1.0
    try:
        return table[declared_unit]
    except KeyError:
        raise UnknownUnit(
            f"cannot convert {declared_unit!r} to {unit!r} for {SensorKind(kind).value}.{field_name}"
        ) from None


def coerce_units(kind, field_name: str, value: float, declared_unit: str | None = None) -> float:
    """Express ``value`` in the canonical unit of ``kind.field_name``."""
    if declared_unit is None:
        return value
    factor = _factor(kind, field_name, declared_unit)
    if factor == 1.0:
        return value
    return value * factor


def from_canonical(kind, field_name: str, value: float, target_unit: str) -> float:
    """Inverse of :func:`coerce_units`."""
    factor = _factor(kind, field_name, target_unit)
    if factor == 1.0:
        return value
    return value / factor


def compatible_units(kind, field_name: str) -> dict[str, float]:
    """All declared units convertible into the field's canonical unit, with factors."""
    unit = canonical_unit(kind, field_name)
    return dict(UNIT_REGISTRY.get(unit or "", {}))


# ---------------------------------------------------------------------------
# missing values
# ---------------------------------------------------------------------------


def mark_missing(kind, fragment: Mapping[str, Any], schemas: SchemaSet | None = None) -> dict:
    """Return ``fragment`` with every absent schema field set to an explicit ``None``.

    Values are never guessed; a marked record fails validation until a real value
    is supplied.
    """
    spec = (schemas or default_schema_set())[kind]
    out = dict(fragment)
    for name in spec.fields:
        if name not in out:
            out[name] = None
    return out


# ---------------------------------------------------------------------------
# newline-delimited documents
# ---------------------------------------------------------------------------


def dumps_doc(doc: Any) -> str:
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def iter_ndjson(lines: Iterable[str]) -> Iterator[Any]:
    for line in lines:
        line = line.strip()
        if line:
            yield json.loads(line)


def read_ndjson(path: str | Path) -> list:
    with open(path, encoding="utf-8") as fh:
        return list(iter_ndjson(fh))


def write_ndjson(path: str | Path, docs: Iterable[Any]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(dumps_doc(doc))
            fh.write("\n")


def sort_records(records: Iterable[Mapping[str, Any]]) -> list:
    """Stable sort by ``time``."""
    return sorted(records, key=lambda r: r["time"])
