"""Schema conformance checks for standardized records and datasets.

Problems are returned as data: a :class:`ValidationReport` holding a boolean
verdict and every error found, each addressed by a JSON-pointer style path
(``/records/3/values/z``) so that a repair step can name exact locations.
"""

from __future__ import annotations

import base64
import binascii
import enum
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .schema import (
    MIN_RECORD_TIME_NS,
    QUATERNION_NORM_TOL,
    FieldSpec,
    SchemaSet,
    SensorKind,
    default_schema_set,
)


class ErrorCode(str, enum.Enum):
    MISSING_FIELD = "MissingField"
    EXTRA_FIELD = "ExtraField"
    WRONG_TYPE = "WrongType"
    OUT_OF_RANGE = "OutOfRange"
    BAD_TIMESTAMP = "BadTimestamp"
    BAD_QUATERNION = "BadQuaternion"
    UNSORTED_TIME = "UnsortedTime"
    # raised by the standardization and script loops rather than the schema check
    UNPARSEABLE = "Unparseable"
    VALUE_MISMATCH = "ValueMismatch"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ValidationError:
    path: str
    code: ErrorCode
    message: str

    def to_document(self) -> dict:
        return {"path": self.path, "code": self.code.value, "message": self.message}


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    errors: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.valid != (len(self.errors) == 0):
            raise ValueError("valid must be True exactly when there are no errors")

    @classmethod
    def from_errors(cls, errors: Iterable[ValidationError]) -> "ValidationReport":
        errors = tuple(errors)
        return cls(valid=not errors, errors=errors)

    def __bool__(self) -> bool:
        return self.valid

    @property
    def codes(self) -> list:
        return [e.code for e in self.errors]

    def to_document(self) -> dict:
        return {"valid": self.valid, "errors": [e.to_document() for e in self.errors]}

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "ValidationReport":
        errs = [ValidationError(e["path"], ErrorCode(e["code"]), e.get("message", "")) for e in doc["errors"]]
        return cls(valid=doc["valid"], errors=tuple(errs))


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _type_name(v) -> str:
    return "null" if v is None else type(v).__name__


def _check_field(spec: FieldSpec, value, path: str, errors: list) -> None:
    if spec.type == "number":
        if not _is_number(value):
            errors.append(ValidationError(path, ErrorCode.WRONG_TYPE, f"expected number, got {_type_name(value)}"))
            return
    elif spec.type == "integer":
        if not _is_number(value) or (isinstance(value, float) and not value.is_integer()):
            errors.append(ValidationError(path, ErrorCode.WRONG_TYPE, f"expected integer, got {value!r}"))
            return
    elif spec.type == "vector3":
        if not isinstance(value, list) or len(value) != 3 or not all(_is_number(c) for c in value):
            errors.append(ValidationError(path, ErrorCode.WRONG_TYPE, "expected array of 3 numbers"))
        return
    elif spec.type == "string":
        if not isinstance(value, str):
            errors.append(ValidationError(path, ErrorCode.WRONG_TYPE, f"expected string, got {_type_name(value)}"))
            return
        if spec.unit == "base64":
            try:
                base64.b64decode(value, validate=True)
            except (binascii.Error, ValueError):
                errors.append(ValidationError(path, ErrorCode.WRONG_TYPE, "image is not valid base64"))
        return
    if spec.minimum is not None and value < spec.minimum:
        errors.append(ValidationError(path, ErrorCode.OUT_OF_RANGE, f"{value} < minimum {spec.minimum}"))
    if spec.maximum is not None and value > spec.maximum:
        errors.append(ValidationError(path, ErrorCode.OUT_OF_RANGE, f"{value} > maximum {spec.maximum}"))


def _check_time(value, path: str, errors: list) -> None:
    if value is None:
        errors.append(ValidationError(path, ErrorCode.MISSING_FIELD, "required field 'time' is missing"))
    elif isinstance(value, bool) or not isinstance(value, int):
        errors.append(ValidationError(path, ErrorCode.WRONG_TYPE, f"time must be integer nanoseconds, got {value!r}"))
    elif value < MIN_RECORD_TIME_NS:
        errors.append(
            ValidationError(path, ErrorCode.BAD_TIMESTAMP, f"time {value} is not UNIX nanoseconds (< 1e15)")
        )


def validate_record(record: Any, schemas: SchemaSet | None = None, prefix: str = "") -> ValidationReport:
    """Check one standardized record; every problem is collected, none raised."""
    schemas = schemas or default_schema_set()
    errors: list[ValidationError] = []
    if not isinstance(record, Mapping):
        errors.append(ValidationError(prefix or "/", ErrorCode.WRONG_TYPE, "record must be an object"))
        return ValidationReport.from_errors(errors)

    name = record.get("name")
    if name is None:
        errors.append(ValidationError(f"{prefix}/name", ErrorCode.MISSING_FIELD, "required field 'name' is missing"))
    elif not isinstance(name, str):
        errors.append(ValidationError(f"{prefix}/name", ErrorCode.WRONG_TYPE, "name must be a string"))
    elif name not in schemas:
        errors.append(ValidationError(f"{prefix}/name", ErrorCode.OUT_OF_RANGE, f"unknown sensor kind {name!r}"))

    _check_time(record.get("time"), f"{prefix}/time", errors)

    if not isinstance(name, str) or name not in schemas:
        return ValidationReport.from_errors(errors)

    spec = schemas[SensorKind(name)]
    for key in record:
        if key not in spec.top_level_keys:
            errors.append(ValidationError(f"{prefix}/{key}", ErrorCode.EXTRA_FIELD, f"unexpected field {key!r}"))

    if spec.container is None:
        holder, base = record, prefix
    else:
        holder, base = record.get(spec.container), f"{prefix}/{spec.container}"
        if holder is None:
            errors.append(ValidationError(base, ErrorCode.MISSING_FIELD, f"required field {spec.container!r} is missing"))
            return ValidationReport.from_errors(errors)
        if not isinstance(holder, Mapping):
            errors.append(ValidationError(base, ErrorCode.WRONG_TYPE, f"{spec.container!r} must be an object"))
            return ValidationReport.from_errors(errors)
        for key in holder:
            if key not in spec.fields:
                errors.append(ValidationError(f"{base}/{key}", ErrorCode.EXTRA_FIELD, f"unexpected field {key!r}"))

    for fname, fspec in spec.fields.items():
        value = holder.get(fname)
        path = f"{base}/{fname}"
        if value is None:
            errors.append(ValidationError(path, ErrorCode.MISSING_FIELD, f"required field {fname!r} is missing"))
            continue
        _check_field(fspec, value, path, errors)

    if spec.constraint == "unit_quaternion":
        comps = [holder.get(k) for k in spec.fields]
        if all(_is_number(c) for c in comps):
            norm = math.sqrt(sum(c * c for c in comps))
            if abs(norm - 1.0) > QUATERNION_NORM_TOL:
                paths = ", ".join(f"{base}/{k}" for k in spec.fields)
                errors.append(
                    ValidationError(base, ErrorCode.BAD_QUATERNION, f"|q| = {norm:.6g} is not unit norm ({paths})")
                )
    return ValidationReport.from_errors(errors)


def validate_dataset(records: Sequence[Any], schemas: SchemaSet | None = None) -> ValidationReport:
    """Check every record (paths prefixed ``/records/<i>``) plus time ordering."""
    schemas = schemas or default_schema_set()
    errors: list[ValidationError] = []
    if not isinstance(records, (list, tuple)):
        return ValidationReport.from_errors(
            [ValidationError("/records", ErrorCode.WRONG_TYPE, "dataset must be an array of records")]
        )
    prev_i, prev_t = None, None
    for i, record in enumerate(records):
        errors.extend(validate_record(record, schemas, prefix=f"/records/{i}").errors)
        t = record.get("time") if isinstance(record, Mapping) else None
        if isinstance(t, int) and not isinstance(t, bool):
            if prev_t is not None and t < prev_t:
                errors.append(
                    ValidationError(
                        f"/records/{i}/time",
                        ErrorCode.UNSORTED_TIME,
                        f"time {t} precedes /records/{prev_i}/time = {prev_t}",
                    )
                )
            else:
                prev_i, prev_t = i, t
    return ValidationReport.from_errors(errors)
