"""Exceptions and diagnostics shared by all mapping phases."""
from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class Diagnostic:
    """Non-fatal finding attached to a parsed or mapped artifact."""
    severity: str  # 'error', 'warning' or 'info'
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.code}: {self.message}"


class BackendError(Exception):
    """Base class for all backend failures."""


class InputError(BackendError):
    """Unreadable, malformed or invalid input document."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class UnsupportedFeatureError(InputError):
    """The IR uses a construct the backend refuses to map."""

    def __init__(self, feature: str, element: str = ""):
        self.feature = feature
        self.element = element
        suffix = f" in '{element}'" if element else ""
        super().__init__(f"unsupported feature: {feature}{suffix}")


class HslValidationError(InputError):
    """Hardware specification violates one of its invariants."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        errors = "; ".join(d.message for d in diagnostics if d.severity == "error")
        super().__init__(f"invalid hardware specification: {errors}")


class MappingRejected(BackendError):
    """The program cannot be realized on the target hardware."""

    def __init__(self, phase: str, resource: str, element: str, detail: str = ""):
        self.phase = phase
        self.resource = resource
        self.element = element
        self.detail = detail
        text = f"{phase} rejected: {resource} at '{element}'"
        if detail:
            text = f"{text} ({detail})"
        super().__init__(text)
