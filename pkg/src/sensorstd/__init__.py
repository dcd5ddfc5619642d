"""Sensor data standardization, rule-based transformation and EKF fusion."""

__version__ = "0.1.0"

from .exceptions import SensorStdError
from .schema import RawPayload, SensorKind, StandardizedRecord, default_schema_set, normalize_timestamp
from .standardizer import MockBackend, RemoteLLMBackend, Standardizer, standardize
from .trgm import RuleTransformer, TransformationScript, apply_script, derive_rules, derive_script
from .validation import ValidationReport, validate_dataset, validate_record

__all__ = [
    "__version__", "SensorStdError", "RawPayload", "SensorKind", "StandardizedRecord",
    "default_schema_set", "normalize_timestamp", "MockBackend", "RemoteLLMBackend", "Standardizer",
    "standardize", "RuleTransformer", "TransformationScript", "apply_script", "derive_rules",
    "derive_script", "ValidationReport", "validate_dataset", "validate_record",
]
