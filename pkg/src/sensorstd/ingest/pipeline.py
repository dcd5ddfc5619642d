"""Ingest pipeline: route raw payloads to standardized records and feed the filter.

Every payload is standardized at ingest so that only validated records reach
the fusion queue. Records then pass through an event-time reordering buffer
and are consumed, one at a time, by a single :class:`FusionEngine`.

The reordering buffer is driven by record timestamps only (never by wall-clock),
which makes a replayed log produce the same trajectory at any replay speed.
"""

from __future__ import annotations

import datetime as _dt
import heapq
import itertools
import json
import logging
import queue
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Mapping

from ..exceptions import (
    BackendUnavailable,
    NmeaError,
    QueueFull,
    SensorStdError,
)
from ..fusion.ekf import MeasurementKind, MeasurementPacket
from ..fusion.filter import FusionConfig, FusionEngine, trajectory_point
from ..schema import NS_PER_S, RawPayload, dumps_doc, normalize_timestamp
from ..standardizer import Backend, BackendConfig, MockMapping, make_backend, standardize
from ..trgm import TransformationScript, apply_script, derive_script
from ..validation import validate_dataset
from .nmea import NmeaDecoder

logger = logging.getLogger(__name__)

ROUTE_KINDS = ("json", "nmea", "vps")
_SIDE_INPUTS = {"Orientation", "Gyroscope", "Gravity"}


@dataclass(frozen=True)
class RouteConfig:
    """How payloads posted to one source path are turned into filter input.

    ``json`` routes go through the standardizer (``backend`` overrides the global
    one; ``mapping`` is a mock mapping document or file). ``nmea`` routes take
    text/plain sentences. ``vps`` routes take ``{"t", "position", "R"?}`` documents.
    """

    kind: str = "json"
    backend: BackendConfig | None = None
    mapping: Any = None
    date: str | None = None  # NMEA fallback date, YYYY-MM-DD
    cache_scripts: bool = True

    def __post_init__(self):
        if self.kind not in ROUTE_KINDS:
            raise ValueError(f"route kind {self.kind!r} not in {ROUTE_KINDS}")
        if isinstance(self.backend, Mapping):
            object.__setattr__(self, "backend", BackendConfig(**self.backend))
        if self.date is not None:
            _dt.date.fromisoformat(self.date)

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "RouteConfig":
        extra = set(doc) - set(cls.__dataclass_fields__)
        if extra:
            raise ValueError(f"unknown route keys: {sorted(extra)}")
        return cls(**doc)

    def to_document(self) -> dict:
        backend = None
        if self.backend is not None:
            backend = {k: getattr(self.backend, k) for k in self.backend.__dataclass_fields__}
            backend["kind"] = self.backend.kind.value
        return {"kind": self.kind, "backend": backend, "mapping": self.mapping, "date": self.date,
                "cache_scripts": self.cache_scripts}


@dataclass(frozen=True)
class IngestConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    routes: Mapping[str, RouteConfig] = field(default_factory=dict)
    queue_capacity: int = 10_000
    reorder_window: float = 0.2  # seconds of event time
    speed: float = float("inf")
    raw_log: str | None = None
    retry_after: int = 1

    def __post_init__(self):
        routes = {name: RouteConfig.from_document(r) if isinstance(r, Mapping) else r
                  for name, r in dict(self.routes).items()}
        object.__setattr__(self, "routes", routes)
        if self.queue_capacity < 1:
            raise ValueError("queue capacity must be >= 1")
        if not self.speed > 0:
            raise ValueError("speed multiplier must be > 0")
        if self.reorder_window < 0:
            raise ValueError("reorder window must be >= 0")
        if not 0 < self.port < 65536:
            raise ValueError("port must be in 1..65535")

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "IngestConfig":
        extra = set(doc) - set(cls.__dataclass_fields__)
        if extra:
            raise ValueError(f"unknown ingest config keys: {sorted(extra)}")
        kwargs = dict(doc)
        if kwargs.get("speed") in ("inf", "Infinity"):
            kwargs["speed"] = float("inf")
        return cls(**kwargs)

    def to_document(self) -> dict:
        return {
            "host": self.host, "port": self.port,
            "routes": {k: v.to_document() for k, v in self.routes.items()},
            "queue_capacity": self.queue_capacity, "reorder_window": self.reorder_window,
            "speed": "inf" if self.speed == float("inf") else self.speed,
            "raw_log": self.raw_log, "retry_after": self.retry_after,
        }


def _item_key(item) -> tuple:
    if isinstance(item, MeasurementPacket):
        return item.t, 1
    return item["time"], 0 if item.get("name") in _SIDE_INPUTS else 1


class ReorderBuffer:
    """Event-time reordering: hold items until the newest timestamp seen is ``window`` ahead.

    Items older than the last released timestamp are dropped and counted.
    """

    def __init__(self, window_ns: int, capacity: int):
        self.window_ns = window_ns
        self.capacity = capacity
        self._heap: list = []
        self._seq = itertools.count()
        self.newest: int | None = None
        self.released: int | None = None
        self.dropped = 0

    def __len__(self) -> int:
        return len(self._heap)

    def room(self) -> int:
        return self.capacity - len(self._heap)

    def push(self, item) -> bool:
        t, prio = _item_key(item)
        if self.released is not None and t < self.released:
            self.dropped += 1
            return False
        if len(self._heap) >= self.capacity:
            raise QueueFull(f"reorder buffer holds {self.capacity} items")
        heapq.heappush(self._heap, (t, prio, next(self._seq), item))
        self.newest = t if self.newest is None else max(self.newest, t)
        return True

    def pop_ready(self, flush: bool = False) -> list:
        out = []
        horizon = None if flush or self.newest is None else self.newest - self.window_ns
        while self._heap and (horizon is None or self._heap[0][0] <= horizon):
            t, _, _, item = heapq.heappop(self._heap)
            self.released = t
            out.append(item)
        return out


@dataclass(frozen=True)
class SubmitResult:
    status: int
    body: dict
    headers: Mapping[str, str] = field(default_factory=dict)

    @property
    def accepted(self) -> bool:
        return self.status == 202


class _Reject(Exception):
    def __init__(self, status: int, body: dict, counter: str = "rejected"):
        super().__init__(body)
        self.status = status
        self.body = body
        self.counter = counter


class IngestPipeline:
    """Routes payloads, keeps per-source script caches and owns the fusion engine.

    With ``threaded=True`` released records go through a bounded queue to one
    consumer thread; otherwise they are consumed inline, which replay uses.
    """

    def __init__(self, config: IngestConfig | None = None, fusion: FusionConfig | None = None,
                 backend_config: BackendConfig | None = None, backends: Mapping[str, Backend] | None = None,
                 max_iterations: int | None = None, threaded: bool = False):
        self.config = config or IngestConfig()
        self.fusion_config = fusion or FusionConfig()
        self.backend_config = backend_config or BackendConfig()
        self.max_iterations = max_iterations or self.backend_config.max_iterations
        self._backends = dict(backends or {})
        self.engine = FusionEngine(self.fusion_config)
        self.buffer = ReorderBuffer(int(round(self.config.reorder_window * NS_PER_S)), self.config.queue_capacity)
        self.scripts: dict[str, TransformationScript] = {}
        self.decoders: dict[str, NmeaDecoder] = {}
        self.counters: Counter = Counter()
        self.trajectory: list = []
        self.latest: dict | None = None
        self.records_in: list = []  # filter input in consumption order
        self._lock = threading.Lock()
        self._engine_lock = threading.Lock()
        self._log_lock = threading.Lock()
        self._log = open(self.config.raw_log, "a", encoding="utf-8") if self.config.raw_log else None
        self.threaded = threaded
        self._queue: queue.Queue | None = None
        self._consumer: threading.Thread | None = None
        if threaded:
            self._queue = queue.Queue(maxsize=self.config.queue_capacity)
            self._consumer = threading.Thread(target=self._drain, name="fusion-consumer", daemon=True)
            self._consumer.start()

    # -- routing --------------------------------------------------------

    def route(self, source: str) -> RouteConfig | None:
        if source in self.config.routes:
            return self.config.routes[source]
        if not self.config.routes:
            return RouteConfig()
        return None

    def backend(self, source: str) -> Backend:
        if source not in self._backends:
            route = self.route(source)
            cfg = route.backend if route and route.backend else self.backend_config
            mapping = None
            if route is not None and route.mapping is not None:
                m = route.mapping
                mapping = MockMapping.from_document(m) if isinstance(m, Mapping) else MockMapping.load(m)
            self._backends[source] = make_backend(cfg, mapping)
        return self._backends[source]

    def _standardize(self, source: str, route: RouteConfig, raw: RawPayload) -> list:
        script = self.scripts.get(source)
        if script is not None:
            result = apply_script(script, raw.body)
            if result.complete and validate_dataset(result.records).valid:
                self.counters["script_hits"] += 1
                return result.records
            self.counters["script_fallbacks"] += 1
        try:
            outcome = standardize(self.backend(source), raw, max_iterations=self.max_iterations)
        except BackendUnavailable as exc:
            raise _Reject(503, {"error": "BackendUnavailable", "message": str(exc)}) from None
        self.counters["standardizer_calls"] += 1
        if not outcome.converged:
            body = outcome.final_report.to_document()
            body["iterations_used"] = outcome.iterations_used
            raise _Reject(422, body, "non_convergent")
        records = list(outcome.dataset)
        if route.cache_scripts:
            try:
                self.scripts[source] = derive_script(raw.body, records)
            except (SensorStdError, ValueError) as exc:
                logger.info("no script for %s: %s", source, exc)
        return records

    def _to_items(self, source: str, route: RouteConfig, body: bytes | str, received_at: int) -> list:
        if route.kind == "nmea":
            decoder = self.decoders.get(source)
            if decoder is None:
                date = _dt.date.fromisoformat(route.date) if route.date else None
                decoder = self.decoders[source] = NmeaDecoder(date)
            try:
                records = decoder.decode(body if isinstance(body, str) else body.decode("ascii"))
            except UnicodeDecodeError:
                raise _Reject(400, {"error": "MalformedField", "message": "body is not ASCII"}) from None
            except NmeaError as exc:
                raise _Reject(400, {"error": type(exc).__name__, "message": str(exc)}) from None
            report = validate_dataset(records)
            if not report.valid:
                raise _Reject(400, {"error": "SchemaViolation", "report": report.to_document()})
            return records
        try:
            doc = json.loads(body)
        except (ValueError, UnicodeDecodeError) as exc:
            raise _Reject(400, {"error": "Unparseable", "message": str(exc)}) from None
        if route.kind == "vps":
            try:
                t = normalize_timestamp(doc["t"] if "t" in doc else doc["time"])
                R = doc.get("R", self.fusion_config.R(MeasurementKind.VPS))
                return [MeasurementPacket(MeasurementKind.VPS, doc["position"], t, R)]
            except (KeyError, TypeError, ValueError, AttributeError) as exc:
                raise _Reject(400, {"error": "MalformedPacket", "message": str(exc)}) from None
        try:
            raw = RawPayload(source, received_at, doc)
        except (TypeError, ValueError) as exc:
            raise _Reject(400, {"error": "Unparseable", "message": str(exc)}) from None
        return self._standardize(source, route, raw)

    # -- submission -----------------------------------------------------

    def submit(self, source: str, body: bytes | str, content_type: str | None = None,
               received_at: int | None = None) -> SubmitResult:
        """Standardize one payload and enqueue its records; never raises for bad input."""
        received_at = received_at or time.time_ns()
        route = self.route(source)
        if route is None:
            self.counters["rejected"] += 1
            return SubmitResult(404, {"error": "UnknownSource", "message": f"no route for {source!r}"})
        self._append_log(source, body, received_at)
        try:
            items = self._to_items(source, route, body, received_at)
            if not items:
                raise _Reject(422, {"valid": False, "errors": [], "message": "payload produced no records"})
            self._enqueue(items)
        except _Reject as rej:
            self.counters[rej.counter] += 1
            headers = {"Retry-After": str(self.config.retry_after)} if rej.status == 503 else {}
            return SubmitResult(rej.status, rej.body, headers)
        except QueueFull as exc:
            self.counters["queue_full"] += 1
            self.counters["rejected"] += 1
            return SubmitResult(503, {"error": "QueueFull", "message": str(exc)},
                                {"Retry-After": str(self.config.retry_after)})
        self.counters["accepted"] += 1
        self.counters["records_enqueued"] += len(items)
        return SubmitResult(202, {"record_count": len(items)})

    def _append_log(self, source: str, body, received_at: int) -> None:
        if self._log is None:
            return
        text = body if isinstance(body, str) else body.decode("utf-8", errors="replace")
        with self._log_lock:
            self._log.write(dumps_doc({"received_at": received_at, "source": source, "body": text}) + "\n")
            self._log.flush()

    def _enqueue(self, items: list) -> None:
        with self._lock:
            if self.buffer.room() < len(items):
                raise QueueFull(f"reorder buffer holds {self.config.queue_capacity} items")
            for item in items:
                self.buffer.push(item)
            self._dispatch(self.buffer.pop_ready())

    def _dispatch(self, ready: list) -> None:
        if not ready:
            return
        if self._queue is None:
            for item in ready:
                self._consume(item)
        else:
            for item in ready:
                self._queue.put(item)

    def _consume(self, item) -> None:
        with self._engine_lock:
            self.records_in.append(item)
            try:
                point = self.engine.process(item)
            except SensorStdError as exc:
                self.counters["filter_errors"] += 1
                logger.warning("filter rejected item at t=%s: %s", _item_key(item)[0], exc)
                return
            if point is not None:
                self.trajectory.append(point)
                self.latest = point

    def _drain(self) -> None:
        while True:
            item = self._queue.get()
            try:
                if item is None:
                    return
                self._consume(item)
            finally:
                self._queue.task_done()

    def flush(self) -> None:
        """Release everything still held for reordering and wait until it is fused."""
        with self._lock:
            self._dispatch(self.buffer.pop_ready(flush=True))
        if self._queue is not None:
            self._queue.join()

    def close(self) -> None:
        self.flush()
        if self._queue is not None and self._consumer is not None:
            self._queue.put(None)
            self._consumer.join()
            self._queue = None
        if self._log is not None:
            self._log.close()
            self._log = None

    # -- introspection --------------------------------------------------

    def counter_document(self) -> dict:
        doc = {k: self.counters.get(k, 0) for k in (
            "accepted", "rejected", "non_convergent", "records_enqueued", "standardizer_calls",
            "script_hits", "script_fallbacks", "queue_full", "filter_errors")}
        doc["late_dropped"] = self.buffer.dropped + self.engine.dropped
        doc["buffered"] = len(self.buffer)
        doc["fused"] = self.engine.processed
        return doc

    def latest_document(self) -> dict | None:
        with self._engine_lock:
            if self.engine.state is None:
                return None
            doc = trajectory_point(self.engine.state)
            origin = self.engine.origin
            doc["origin"] = origin.to_document() if origin else None
            return doc
