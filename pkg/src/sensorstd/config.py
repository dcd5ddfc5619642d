"""One configuration document covering every stage."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Mapping

from .fusion.filter import FusionConfig
from .ingest.pipeline import IngestConfig
from .standardizer import BackendConfig

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


@dataclass(frozen=True)
class GlobalConfig:
    standardizer: BackendConfig = field(default_factory=BackendConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    log_level: str = "WARNING"

    def __post_init__(self):
        if self.log_level.upper() not in LOG_LEVELS:
            raise ValueError(f"log_level must be one of {LOG_LEVELS}")
        object.__setattr__(self, "log_level", self.log_level.upper())

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "GlobalConfig":
        if not isinstance(doc, Mapping):
            raise ValueError("config must be an object")
        extra = set(doc) - {"standardizer", "fusion", "ingest", "log_level"}
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        std = dict(doc.get("standardizer") or {})
        unknown = set(std) - set(BackendConfig.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown standardizer keys: {sorted(unknown)}")
        return cls(
            standardizer=BackendConfig(**std),
            fusion=FusionConfig.from_document(doc.get("fusion") or {}),
            ingest=IngestConfig.from_document(doc.get("ingest") or {}),
            log_level=doc.get("log_level", "WARNING"),
        )

    @classmethod
    def load(cls, path) -> "GlobalConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_document(json.load(fh))

    def to_document(self) -> dict:
        std = {k: getattr(self.standardizer, k) for k in BackendConfig.__dataclass_fields__}
        std["kind"] = self.standardizer.kind.value
        return {"standardizer": std, "fusion": self.fusion.to_document(),
                "ingest": self.ingest.to_document(), "log_level": self.log_level}

    @property
    def level(self) -> int:
        return getattr(logging, self.log_level)
