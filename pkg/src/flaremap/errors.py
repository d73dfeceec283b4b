"""Exception types shared across the package."""

from __future__ import annotations


class FlaremapError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(FlaremapError):
    """A malformed input row; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(FlaremapError):
    """Inputs or parameters violate a documented precondition."""


class MetricDomainError(FlaremapError):
    """Vectors outside the domain of the requested dissimilarity."""

    def __init__(self, message: str, labels: tuple | None = None):
        self.labels = labels or ()
        if self.labels:
            shown = ", ".join(repr(l) for l in self.labels[:10])
            more = "" if len(self.labels) <= 10 else f" (+{len(self.labels) - 10} more)"
            message = f"{message}: {shown}{more}"
        super().__init__(message)


class ZeroVarianceError(FlaremapError):
    """All points identical; no principal axes exist."""


class UnknownEntityError(FlaremapError):
    """Entity id not present anywhere in the graph."""


class InternalInvariantError(FlaremapError):
    """Two independent computations of the same quantity disagree."""


class RankDeficiencyError(FlaremapError):
    """Design matrix is rank deficient; names the offending columns."""

    def __init__(self, columns: tuple[str, ...]):
        self.columns = columns
        super().__init__(f"design matrix is rank deficient in columns: {', '.join(columns)}")


class CacheError(FlaremapError):
    """A dissimilarity cache file is unreadable or mismatched."""


class PipelineStageError(FlaremapError):
    """A pipeline stage failed; carries the stage name and the cause."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
