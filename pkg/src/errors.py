"""
Exception hierarchy for the OTS library.
"""

from typing import Optional


class OtsError(Exception):
    """Base class for all library errors."""


class ShapeError(OtsError, ValueError):
    """Raised when operand shapes do not agree."""


class ConfigurationError(OtsError, ValueError):
    """Raised when a layer or model configuration is not constructible."""


class UsageError(OtsError, ValueError):
    """Raised when an operation is called outside its contract."""


class FormatError(OtsError, ValueError):
    """Raised when a container or dataset file is malformed."""

    def __init__(self, message: str, offset: Optional[int] = None, sample: Optional[int] = None):
        self.offset = offset
        self.sample = sample
        details = []
        if offset is not None:
            details.append(f"offset {offset}")
        if sample is not None:
            details.append(f"sample {sample}")
        suffix = f" ({', '.join(details)})" if details else ""
        super().__init__(f"{message}{suffix}")


class AcceptanceError(OtsError):
    """Raised when a measured quantity misses its acceptance threshold."""


class NumericalError(OtsError, ArithmeticError):
    """Raised when a computation produces NaN or Inf."""
