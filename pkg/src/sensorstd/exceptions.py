"""Exception hierarchy shared across the package."""


class SensorStdError(Exception):
    """Base class for every error raised by sensorstd."""


# core schema
class UnparseableTimestamp(SensorStdError, ValueError):
    pass


class NegativeTimestamp(SensorStdError, ValueError):
    pass


class UnknownUnit(SensorStdError, ValueError):
    pass


class SchemaViolation(SensorStdError, ValueError):
    """Raised when a typed record is built from a non-conforming document."""

    def __init__(self, report):
        self.report = report
        lines = "; ".join(f"{e.path}: {e.code}" for e in report.errors)
        super().__init__(f"record does not conform to schema ({lines})")


# jsonpath
class PathSyntaxError(SensorStdError, ValueError):
    def __init__(self, text, offset, expected):
        self.text = text
        self.offset = offset
        self.expected = expected
        super().__init__(f"bad path {text!r} at offset {offset}: expected {expected}")


class SetOnWildcard(SensorStdError, ValueError):
    pass


class TypeConflict(SensorStdError, TypeError):
    pass


# standardizer
class BackendUnavailable(SensorStdError, RuntimeError):
    pass


# trgm
class UnmatchedLeaf(SensorStdError, ValueError):
    def __init__(self, paths, rules=None):
        self.paths = list(paths)
        self.rules = rules or []
        super().__init__("no input counterpart for output leaves: " + ", ".join(self.paths))


# fusion
class NonUnitQuaternion(SensorStdError, ValueError):
    pass


class NonMonotonicTime(SensorStdError, ValueError):
    pass


class GapTooLarge(SensorStdError, ValueError):
    pass


class SingularInnovation(SensorStdError, ArithmeticError):
    pass


class EmptyStream(SensorStdError, ValueError):
    pass


class NoPositionSensor(SensorStdError, ValueError):
    pass


# ingest
class NmeaError(SensorStdError, ValueError):
    pass


class ChecksumMismatch(NmeaError):
    pass


class UnsupportedSentence(NmeaError):
    pass


class MalformedField(NmeaError):
    def __init__(self, index, message):
        self.index = index
        super().__init__(f"field {index}: {message}")


class MalformedLogLine(SensorStdError, ValueError):
    def __init__(self, line_number, message):
        self.line_number = line_number
        self.message = message
        super().__init__(f"line {line_number}: {message}")


class QueueFull(SensorStdError, RuntimeError):
    pass


# evaluate
class EmptySeries(SensorStdError, ValueError):
    pass
