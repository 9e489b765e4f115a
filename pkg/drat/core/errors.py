from typing import Any, Dict, Optional


class DratError(Exception):
    """Base error; carries a human-readable detail and the CLI exit code."""

    exit_code = 1

    def __init__(self, detail: str, *, context: Optional[Dict[str, Any]] = None):
        super().__init__(detail)
        self.detail = detail
        self.context = context or {}

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {"error": type(self).__name__, "detail": self.detail}
        if self.context:
            payload["context"] = self.context
        return payload


class ContractViolation(DratError):
    """A precondition or shape contract was not met."""


class NumericError(DratError):
    """NaN or Inf reached an op boundary."""


class TrainingError(DratError):
    def __init__(self, detail: str, *, step: int, context: Optional[Dict[str, Any]] = None):
        merged = {"step": step}
        merged.update(context or {})
        super().__init__(detail, context=merged)
        self.step = step


class DataIOError(DratError):
    """Unreadable or unwritable paths and malformed files."""


class TensorFormatError(DataIOError):
    pass


class CheckFailed(DratError):
    pass


class UsageError(DratError):
    exit_code = 2
