"""Raw payload -> standardized dataset, with an iterative validate-and-repair loop.

Two backends propose candidate datasets:

* :class:`RemoteLLMBackend` talks to a chat-completions style HTTP endpoint.
* :class:`MockBackend` is driven by a mapping config (source path -> kind/field)
  and is fully deterministic, so the pipeline can run offline.

:func:`standardize` wraps either backend in the loop: propose, validate, feed the
errors back as a repair instruction, stop on success or at the iteration cap.
Non-convergence is reported in the outcome, not raised.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import re
import time
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Protocol, Sequence

import httpx
from sklearn.base import BaseEstimator, TransformerMixin

from . import jsonpath
from .exceptions import BackendUnavailable
from .schema import (
    RawPayload,
    SchemaSet,
    SensorKind,
    coerce_units,
    default_schema_set,
    dumps_doc,
    mark_missing,
    normalize_timestamp,
)
from .validation import ErrorCode, ValidationError, ValidationReport, validate_dataset

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERATIONS = 5
MAX_ITERATIONS_LIMIT = 20


class BackendKind(str, enum.Enum):
    REMOTE_LLM = "RemoteLLM"
    MOCK = "DeterministicMock"


@dataclass(frozen=True)
class BackendConfig:
    kind: BackendKind = BackendKind.MOCK
    endpoint: str | None = None
    model_name: str | None = None
    auth_token_env: str | None = None
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    timeout: float = 60.0
    mapping: str | None = None  # mock mapping file

    def __post_init__(self):
        object.__setattr__(self, "kind", BackendKind(self.kind))
        if self.kind is BackendKind.REMOTE_LLM and not (self.endpoint and self.model_name):
            raise ValueError("RemoteLLM backend requires endpoint and model_name")
        if not 1 <= self.max_iterations <= MAX_ITERATIONS_LIMIT:
            raise ValueError(f"max_iterations must be in [1, {MAX_ITERATIONS_LIMIT}]")


@dataclass(frozen=True)
class StandardizationOutcome:
    dataset: tuple
    iterations_used: int
    converged: bool
    final_report: ValidationReport

    def __post_init__(self):
        if self.converged != self.final_report.valid:
            raise ValueError("converged must mirror final_report.valid")


class Backend(Protocol):
    def propose(self, raw: RawPayload, repair: str | None, iteration: int) -> str:
        """Return candidate dataset text for one loop iteration."""


# ---------------------------------------------------------------------------
# mock backend
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MappingEntry:
    path: str
    kind: SensorKind
    field: str
    unit: str | None = None
    record: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SensorKind(self.kind))
        jsonpath.parse_path(self.path)

    @property
    def label(self) -> str:
        return self.record or self.kind.value


@dataclass(frozen=True)
class MockMapping:
    entries: tuple

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "MockMapping":
        return cls(tuple(MappingEntry(**e) for e in doc["entries"]))

    @classmethod
    def load(cls, path) -> "MockMapping":
        with open(path, encoding="utf-8") as fh:
            return cls.from_document(json.load(fh))

    def to_document(self) -> dict:
        out = []
        for e in self.entries:
            d = {"path": e.path, "kind": e.kind.value, "field": e.field}
            if e.unit:
                d["unit"] = e.unit
            if e.record:
                d["record"] = e.record
            out.append(d)
        return {"entries": out}


def _convert(entry: MappingEntry, value):
    if entry.field == "time":
        return normalize_timestamp(value)
    if entry.unit is None:
        return value
    if isinstance(value, list):
        return [coerce_units(entry.kind, entry.field, v, entry.unit) for v in value]
    return coerce_units(entry.kind, entry.field, value, entry.unit)


def map_payload(mapping: MockMapping, body: Any, schemas: SchemaSet | None = None) -> list:
    """Build standardized records from ``body`` by following ``mapping``.

    Absent source values become explicit nulls; nothing is invented.
    """
    schemas = schemas or default_schema_set()
    groups: dict[str, dict] = {}
    for entry in mapping.entries:
        group = groups.setdefault(entry.label, {"kind": entry.kind, "time": None, "fields": {}})
        matches = jsonpath.get(body, entry.path)
        if not matches:
            continue
        value = _convert(entry, matches[0])
        if entry.field == "time":
            group["time"] = value
        else:
            group["fields"][entry.field] = value
    records = []
    for group in groups.values():
        spec = schemas[group["kind"]]
        values = mark_missing(group["kind"], group["fields"], schemas)
        rec: dict[str, Any] = {"name": group["kind"].value, "time": group["time"]}
        if spec.container is None:
            rec.update(values)
        else:
            rec[spec.container] = values
        records.append(rec)
    records.sort(key=lambda r: (r["time"] is None, r["time"] or 0))
    return records


class MockBackend:
    """Mapping-driven deterministic backend.

    ``faulty_iterations`` makes the first N proposals drop ``drop_fields`` from every
    record; ``garbage_iterations`` makes the first N proposals unparseable. Both exist
    to exercise the repair loop.
    """

    def __init__(self, mapping: MockMapping, faulty_iterations: int = 0, drop_fields=("time",),
                 garbage_iterations: int = 0, schemas: SchemaSet | None = None):
        self.mapping = mapping
        self.faulty_iterations = faulty_iterations
        self.drop_fields = tuple(drop_fields)
        self.garbage_iterations = garbage_iterations
        self.schemas = schemas
        self.calls: list = []

    def propose(self, raw: RawPayload, repair: str | None, iteration: int) -> str:
        self.calls.append((iteration, repair))
        if iteration <= self.garbage_iterations:
            return "Sure! Here is the data: {not json"
        records = map_payload(self.mapping, raw.body, self.schemas)
        if iteration <= self.faulty_iterations:
            for rec in records:
                for name in self.drop_fields:
                    rec.pop(name, None)
                    if isinstance(rec.get("values"), dict):
                        rec["values"].pop(name, None)
        return dumps_doc(records)


# ---------------------------------------------------------------------------
# remote backend
# ---------------------------------------------------------------------------

SYSTEM_PROMPT = (
    "You convert raw sensor payloads into standardized sensor records.\n"
    "Output JSON only: an array of records, no prose and no code fences.\n"
    "Each record has \"name\" (one of the sensor kinds below), \"time\" (integer UNIX "
    "nanoseconds) and either a \"values\" object or the kind's top-level fields.\n"
    "Use exactly the fields listed, in the listed units. Use null for values that are "
    "absent from the payload; never guess them.\n\nSchema:\n"
)


def segment_payload(body: Any) -> dict:
    """Split a payload by top-level key; each key is assumed to hold at most one sensor kind."""
    if isinstance(body, dict) and body:
        return dict(body)
    return {"payload": body}


def build_user_message(raw: RawPayload, repair: str | None) -> str:
    parts = [f"Source: {raw.source_id}"]
    for key, sub in segment_payload(raw.body).items():
        parts.append(f"Segment {key}:\n{dumps_doc(sub)}")
    if repair:
        parts.append(repair)
    return "\n\n".join(parts)


class RemoteLLMBackend:
    def __init__(self, config: BackendConfig, client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep, schemas: SchemaSet | None = None,
                 attempts: int = 3, backoff: float = 0.5):
        if config.kind is not BackendKind.REMOTE_LLM:
            raise ValueError("config is not a RemoteLLM backend")
        self.config = config
        self.client = client or httpx.Client(timeout=config.timeout)
        self.sleep = sleep
        self.schemas = schemas or default_schema_set()
        self.attempts = attempts
        self.backoff = backoff

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.auth_token_env:
            token = os.environ.get(self.config.auth_token_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def chat_body(self, system: str, user: str) -> dict:
        return {
            "model": self.config.model_name,
            "temperature": 0,
            "messages": [{"role": "system", "content": system}, {"role": "user", "content": user}],
        }

    def request_body(self, raw: RawPayload, repair: str | None) -> dict:
        return self.chat_body(SYSTEM_PROMPT + dumps_doc(self.schemas.to_document()),
                              build_user_message(raw, repair))

    def propose(self, raw: RawPayload, repair: str | None, iteration: int) -> str:
        return self.complete(self.request_body(raw, repair))

    def complete(self, body: dict) -> str:
        """POST one chat-completions request and return the message content.

        Transport faults and 429/5xx are retried with exponential backoff; a body that
        is not a well-formed completion is returned as raw text for the caller to reject.
        """
        last: Exception | None = None
        for attempt in range(self.attempts):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self.client.post(self.config.endpoint, json=body, headers=self._headers(),
                                        timeout=self.config.timeout)
            except httpx.TransportError as exc:
                last = exc
                logger.warning("backend transport error (%d/%d): %s", attempt + 1, self.attempts, exc)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = RuntimeError(f"HTTP {resp.status_code}")
                logger.warning("backend returned %d (%d/%d)", resp.status_code, attempt + 1, self.attempts)
                continue
            if resp.status_code >= 400:
                raise BackendUnavailable(f"backend rejected request: HTTP {resp.status_code}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                # a content fault, not a transport fault: let the loop spend an iteration on it
                return resp.text
        raise BackendUnavailable(f"backend unreachable after {self.attempts} attempts: {last}")


def make_backend(config: BackendConfig, mapping: MockMapping | None = None, **kwargs) -> Backend:
    if config.kind is BackendKind.REMOTE_LLM:
        return RemoteLLMBackend(config, **kwargs)
    if mapping is None:
        if config.mapping is None:
            raise ValueError("mock backend needs a mapping")
        mapping = MockMapping.load(config.mapping)
    return MockBackend(mapping, **kwargs)


# ---------------------------------------------------------------------------
# loop
# ---------------------------------------------------------------------------

_FENCE = re.compile(r"^```(?:json)?\s*(.*?)\s*```$", re.S | re.I)


def strip_fences(text: str) -> str:
    text = text.strip()
    m = _FENCE.match(text)
    return m.group(1) if m else text


def parse_candidate(text: str) -> list:
    doc = json.loads(strip_fences(text))
    if isinstance(doc, dict) and isinstance(doc.get("records"), list):
        doc = doc["records"]
    elif isinstance(doc, dict):
        doc = [doc]
    if not isinstance(doc, list):
        raise ValueError("candidate is not an array of records")
    return doc


def _kind_at(candidate, path: str) -> str | None:
    m = re.match(r"^/records/(\d+)", path)
    if not m or not isinstance(candidate, list):
        return None
    i = int(m.group(1))
    if i < len(candidate) and isinstance(candidate[i], dict):
        name = candidate[i].get("name")
        return name if isinstance(name, str) else None
    return None


def build_repair_prompt(previous_candidate: Any, report: ValidationReport,
                        schemas: SchemaSet | None = None) -> str:
    """Instruction text listing every validation error and the schema of the failing kinds."""
    if report.valid:
        raise ValueError("repair prompt requested for a valid candidate")
    schemas = schemas or default_schema_set()
    kinds = []
    for err in report.errors:
        name = _kind_at(previous_candidate, err.path)
        if name in schemas and name not in kinds:
            kinds.append(name)
    if not kinds:
        kinds = [k.value for k in schemas.kinds]
    full = schemas.to_document()["kinds"]
    excerpt = {k: full[k] for k in kinds}
    lines = ["Your previous output failed validation. Fix every error below and return the corrected array.",
             "Errors:"]
    lines += [f"- at {e.path}: {e.code.value} ({e.message})" for e in report.errors]
    lines.append("Schema for the affected kinds:")
    lines.append(dumps_doc(excerpt))
    if isinstance(previous_candidate, str):
        lines.append("Previous output (verbatim):")
        lines.append(previous_candidate)
    elif previous_candidate is not None:
        lines.append("Previous output:")
        lines.append(dumps_doc(previous_candidate))
    return "\n".join(lines)


def standardize(backend: Backend, raw: RawPayload, schemas: SchemaSet | None = None,
                max_iterations: int = DEFAULT_MAX_ITERATIONS) -> StandardizationOutcome:
    if not 1 <= max_iterations <= MAX_ITERATIONS_LIMIT:
        raise ValueError(f"max_iterations must be in [1, {MAX_ITERATIONS_LIMIT}]")
    schemas = schemas or default_schema_set()
    repair = None
    candidate: list = []
    report = ValidationReport.from_errors([])
    for iteration in range(1, max_iterations + 1):
        text = backend.propose(raw, repair, iteration)
        try:
            candidate = parse_candidate(text)
        except ValueError as exc:
            candidate = []
            report = ValidationReport.from_errors(
                [ValidationError("", ErrorCode.UNPARSEABLE, f"response unparseable: {exc}")]
            )
            repair = build_repair_prompt(text, report, schemas)
            continue
        report = validate_dataset(candidate, schemas)
        if report.valid:
            return StandardizationOutcome(tuple(candidate), iteration, True, report)
        repair = build_repair_prompt(candidate, report, schemas)
        logger.debug("iteration %d: %d validation errors", iteration, len(report.errors))
    return StandardizationOutcome(tuple(candidate), max_iterations, False, report)


class Standardizer(BaseEstimator, TransformerMixin):
    """Estimator wrapper: ``transform`` maps raw payloads to standardized datasets.

    Outcomes of the most recent ``transform`` call are kept in ``outcomes_``.
    Non-converged payloads yield an empty dataset.
    """

    def __init__(self, backend=None, max_iterations: int = DEFAULT_MAX_ITERATIONS, schemas=None):
        self.backend = backend
        self.max_iterations = max_iterations
        self.schemas = schemas

    def fit(self, X=None, y=None):
        if self.backend is None:
            raise ValueError("Standardizer needs a backend")
        return self

    def transform(self, X: Sequence[RawPayload]) -> list:
        self.outcomes_ = [standardize(self.backend, raw, self.schemas, self.max_iterations) for raw in X]
        return [list(o.dataset) if o.converged else [] for o in self.outcomes_]
