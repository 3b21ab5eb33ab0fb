"""
Workbench Errors

Exception hierarchy shared by the core engines and the job layer. The job
layer maps these onto exit codes (CLI) and status codes (HTTP service).
"""

from typing import Any, Dict, Optional


class WorkbenchError(Exception):
    """Base class for every error raised by the workbench."""


class ValidationError(WorkbenchError, ValueError):
    """Invalid parameters or inputs."""


class DimensionMismatchError(ValidationError):
    """Elements or operators live on different spaces."""


class NotNonexpansiveError(ValidationError):
    """A matrix operator has norm larger than 1 (beyond tolerance)."""


class NotKoopmanError(ValidationError):
    """A pointwise operation was handed an operator without pointwise meaning."""


class NotIsometryError(ValidationError):
    """A matrix operator claims to be an isometry but does not preserve norms."""


class BudgetExceededError(WorkbenchError):
    """
    Raised when a big-integer evaluation would exceed the digit budget.

    Attributes:
        iterations_completed: How many iterations finished before the refusal
        digits: Decimal digits of the last value that fit (or the predicted size)
        partial: Optional extra data describing the progress made
    """

    def __init__(self, message: str, iterations_completed: int = 0, digits: int = 0,
                 partial: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.iterations_completed = iterations_completed
        self.digits = digits
        self.partial = partial or {}


class CapExceededError(WorkbenchError):
    """A trace cap or window cap was reached before the operation finished."""

    def __init__(self, message: str, partial: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.partial = partial or {}


class OraclePrecisionError(WorkbenchError):
    """A real-number oracle refused the requested precision."""
