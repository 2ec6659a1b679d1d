"""Exception types shared across the harness.

Every error a caller is expected to catch has a named class here; generic
ValueError/OSError are reserved for programming mistakes and raw file I/O.
"""

from __future__ import annotations


class ClincalcError(Exception):
    """Base class for all harness errors."""


class ParseError(ClincalcError):
    """A value that should be a decimal literal is not."""


class MalformedOutput(ClincalcError):
    """Raw model output is empty or whitespace and cannot be parsed at all."""


class SchemaError(ClincalcError):
    """A dataset row violates the expected schema.

    Carries the first offending row and column so batch loads fail with a
    usable diagnostic.
    """

    def __init__(self, message: str, *, row: object = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class NoExemplar(ClincalcError):
    """No other case shares the query case's calculator."""


class CassetteMiss(ClincalcError):
    """Replay mode found no cassette entry for a request key."""

    def __init__(self, key: str, hint: str | None = None):
        msg = f"cassette miss for key {key}"
        if hint:
            msg += f" (nearest recorded key: {hint})"
        super().__init__(msg)
        self.key = key
        self.hint = hint


class ProviderError(ClincalcError):
    """A provider call failed after all retries were exhausted."""


class ProviderTimeout(ProviderError):
    """A provider call timed out."""


class UnparseableVerdict(ClincalcError):
    """A judge response contained no recognizable verdict JSON."""


class EmptyInput(ClincalcError):
    """An aggregate operation received an empty input list."""


class LengthMismatch(ClincalcError):
    """Paired vectors have different lengths."""


class MissingContextField(ClincalcError):
    """An error-prompt builder is missing one of its declared context fields."""


class EmptyBank(ClincalcError):
    """A formula bank or index has no entries."""


class UnknownGoldId(ClincalcError):
    """A retrieval query references a formula id absent from the index."""


class NoCodeEmitted(ClincalcError):
    """A code-executing strategy got a response without an executable block."""


class SandboxFailure(ClincalcError):
    """The sandbox ran the script but did not produce a usable result."""

    def __init__(self, message: str, *, status: str = "error", stderr: str = ""):
        super().__init__(message)
        self.status = status
        self.stderr = stderr


class MissingExtras(ClincalcError):
    """A strategy prompt builder lacked a required resource (index, pool, ...)."""


class MissingResource(ClincalcError):
    """A CLI command lacked a required input (index, sandbox, pool, ...)."""
