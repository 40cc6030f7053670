"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PAChangeError(Exception):
    """Base class for all package errors."""


class InvalidOffset(PAChangeError, ValueError):
    """An offset parameter is not strictly greater than -1."""


class InvalidFractions(PAChangeError, ValueError):
    """Changepoint fractions are not strictly increasing inside (0, 1)."""


class NTooSmall(PAChangeError, ValueError):
    """Requested network size does not exceed the seed graph."""


class OutOfRange(PAChangeError, IndexError):
    """A step index lies outside the recorded trace."""


class InvalidArgs(PAChangeError, ValueError):
    """Generic argument validation failure."""


class TruncationNotConverged(PAChangeError, ArithmeticError):
    """An infinite series could not be truncated within tolerance."""


class QuadratureFailed(PAChangeError, ArithmeticError):
    """Adaptive quadrature hit its recursion limit before meeting tolerance."""


class DomainError(PAChangeError, ValueError):
    """A log-likelihood argument would be non-positive."""


class DegenerateSegment(PAChangeError):
    """The segment score is identically zero, so the MLE is not unique."""


class SegmentTooShort(PAChangeError, ValueError):
    """Segment has fewer events than the configured minimum."""


class WindowTooSmall(PAChangeError, ValueError):
    """The window leaves no admissible scan position."""


class QuantileTableMismatch(PAChangeError, ValueError):
    """A null quantile table was built for a different law or parameter."""


class CacheCorrupt(PAChangeError):
    """A cached quantile table failed its checksum."""


class InvalidP(PAChangeError, ValueError):
    """A p-value lies outside [0, 1]."""


class ParseError(PAChangeError, ValueError):
    """Malformed rows in an edgelist file."""

    def __init__(self, message: str, bad_lines: list[tuple[int, str]] | None = None):
        super().__init__(message)
        self.bad_lines = bad_lines or []


class EmptyFile(PAChangeError, ValueError):
    """Input file contained no edges."""
