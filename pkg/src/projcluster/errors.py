"""Exception types shared across the pipeline."""

from __future__ import annotations


class StreamParseError(ValueError):
    """A detection / ground-truth file line could not be parsed.

    Carries the 1-based line number of the offending record.
    """

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class StreamValidationError(ValueError):
    """A parsed record violates a field invariant (dims, score, frame index)."""


class NoContrastError(ValueError):
    """Thresholding input has fewer than two distinct values."""


class GeometryMismatchError(ValueError):
    """Grids with different shapes were combined."""


class MagnitudeRangeError(ValueError):
    """A transform magnitude falls outside its declared range."""


class UndefinedMetricError(ValueError):
    """A metric has no defined value for this input (empty sets, zero counts)."""


class OracleError(RuntimeError):
    """A score oracle failed; carries the candidate that was being evaluated."""

    def __init__(self, kind: str, candidate, message: str):
        super().__init__(f"oracle failed for {kind} candidate {candidate}: {message}")
        self.kind = kind
        self.candidate = candidate
