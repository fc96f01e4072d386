"""Exception types shared across the engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(EngineError, ValueError):
    """An argument violated an operation's precondition."""


class NotFoundError(EngineError, LookupError):
    """A referenced problem or entry does not exist."""


class SchemaError(EngineError):
    """Structured text did not match its expected schema."""

    def __init__(self, message: str, raw_text: str | None = None, details: list | None = None):
        super().__init__(message)
        self.raw_text = raw_text
        self.details = details or []


class AlignmentError(SchemaError):
    """Graded answers could not be matched to submitted attempts."""

    def __init__(self, message: str, unmatched: list | None = None, raw_text: str | None = None):
        super().__init__(message, raw_text=raw_text, details=unmatched)
        self.unmatched = unmatched or []


class RefinementError(EngineError):
    """A problem-refinement reply could not be turned into a new problem."""


class TemplateError(EngineError):
    """A prompt template could not be rendered completely."""


class SnapshotError(EngineError):
    """A curriculum snapshot could not be written or read back."""


class SnapshotVersionError(SnapshotError):
    """Snapshot file uses an unsupported format version."""


class SnapshotCorruptionError(SnapshotError):
    """Snapshot file is truncated or structurally invalid."""

    def __init__(self, message: str, last_good: str | None = None):
        super().__init__(message)
        self.last_good = last_good


class TransportError(EngineError):
    """All delivery attempts against remote endpoints failed."""

    def __init__(self, message: str, attempts: list | None = None):
        super().__init__(message)
        self.attempts = attempts or []


class GatewayTimeoutError(TransportError):
    """Request exceeded the configured timeout on every attempt."""
