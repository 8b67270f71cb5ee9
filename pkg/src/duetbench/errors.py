"""Exception types shared across the toolchain."""


class DuetBenchError(Exception):
    """Base class for all toolchain errors."""


class MalformedDiff(DuetBenchError):
    """Unified diff input violates the format (bad header, count mismatch, binary/rename)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(DuetBenchError):
    """A structured document does not conform to its schema.

    ``path`` points into the offending document, e.g. ``changes[2].ideal_span``.
    """

    def __init__(self, message: str, path: str = ""):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class SchemaViolation(SchemaError):
    """A marker-plan document failed validation; the change is skipped."""


class RangeOutOfBounds(DuetBenchError):
    """A span line range falls outside the target file."""


class SentinelCorrupted(DuetBenchError):
    """An instrumentation sentinel line was hand-edited and can no longer be stripped safely."""


class InsufficientData(DuetBenchError):
    """Not enough measurements for the requested statistic."""


class ZeroBaseline(DuetBenchError):
    """A paired measurement has x_A == 0; relative change is undefined."""


class HealthCheckTimeout(DuetBenchError):
    """A system under test never became healthy within the deadline."""

    def __init__(self, version_tag: str, message: str = ""):
        self.version_tag = version_tag
        super().__init__(message or f"version {version_tag} failed its health check")
