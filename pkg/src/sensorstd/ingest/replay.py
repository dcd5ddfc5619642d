"""Feed a recorded raw-payload log through an ingest pipeline."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

from ..exceptions import MalformedLogLine
from .pipeline import IngestPipeline

logger = logging.getLogger(__name__)


@dataclass
class ReplaySummary:
    accepted: int = 0
    rejected: int = 0
    non_convergent: int = 0
    malformed: list = field(default_factory=list)  # MalformedLogLine instances

    def to_document(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "non_convergent": self.non_convergent,
            "malformed": [{"line": e.line_number, "message": e.message} for e in self.malformed],
        }


def parse_log_line(line: str, line_number: int) -> tuple:
    try:
        doc = json.loads(line)
    except ValueError as exc:
        raise MalformedLogLine(line_number, f"not a document: {exc}") from None
    if not isinstance(doc, dict) or set(doc) != {"received_at", "source", "body"}:
        raise MalformedLogLine(line_number, "expected exactly received_at, source and body")
    received_at, source, body = doc["received_at"], doc["source"], doc["body"]
    if isinstance(received_at, bool) or not isinstance(received_at, int) or received_at <= 0:
        raise MalformedLogLine(line_number, "received_at must be positive integer nanoseconds")
    if not isinstance(source, str) or not source:
        raise MalformedLogLine(line_number, "source must be a non-empty string")
    if not isinstance(body, str):
        body = json.dumps(body)
    return received_at, source, body


def replay(path, speed: float, pipeline: IngestPipeline,
           sleep: Callable[[float], None] = time.sleep) -> ReplaySummary:
    """Submit every logged payload, pacing by recorded inter-arrival times divided by ``speed``."""
    if not speed > 0:
        raise ValueError("speed must be > 0")
    summary = ReplaySummary()
    prev = None
    with open(path, encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                received_at, source, body = parse_log_line(line, number)
            except MalformedLogLine as exc:
                logger.warning("%s", exc)
                summary.malformed.append(exc)
                continue
            if prev is not None and not math.isinf(speed) and received_at > prev:
                sleep((received_at - prev) / 1e9 / speed)
            prev = received_at if prev is None else max(prev, received_at)
            result = pipeline.submit(source, body, None, received_at)
            if result.status == 202:
                summary.accepted += 1
            elif result.status == 422:
                summary.non_convergent += 1
            else:
                summary.rejected += 1
    pipeline.flush()
    return summary
