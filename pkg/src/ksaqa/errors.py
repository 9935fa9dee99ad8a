"""Exception types shared across the package."""


class KsaqaError(Exception):
    """Base class for all package errors."""


class IngestError(KsaqaError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ShapeError(KsaqaError):
    """Operands with incompatible shapes; message names both."""


class NonFiniteError(KsaqaError):
    """An operation produced NaN or Inf."""


class ConfigError(KsaqaError):
    """Unreadable, unknown-key, or ill-typed configuration."""


class CheckpointError(KsaqaError):
    """Base class for checkpoint I/O failures."""


class BadMagicError(CheckpointError):
    """File does not start with the expected magic bytes."""


class TruncatedCheckpointError(CheckpointError):
    """File ends mid-entry; carries the byte offset where data ran out."""

    def __init__(self, offset: int, message: str = "checkpoint truncated"):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class DuplicateNameError(CheckpointError):
    """The same tensor name appears twice."""
