"""
Exception hierarchy for push-vhgp.
Every error carries the process exit code the command line reports for it.
"""

from typing import Optional


class PushVHGPError(Exception):
    """Base class for all errors raised by this package."""

    exit_code: int = 3


class InputError(PushVHGPError, ValueError):
    """Invalid argument, dimension mismatch or out-of-range input."""

    exit_code = 1


class DataError(PushVHGPError):
    """Dataset could not be read or violates its schema."""

    exit_code = 2


class DataFormatError(DataError):
    """Unknown format or header/unit mismatch."""


class DataParseError(DataError):
    """A single row or field could not be accepted."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")


class NumericalError(PushVHGPError):
    """Numerical failure during fitting or prediction."""

    exit_code = 3


class ConditioningError(NumericalError):
    """Cholesky factorization failed even after jitter escalation."""
