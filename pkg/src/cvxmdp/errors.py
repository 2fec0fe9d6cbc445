from typing import Any


class CvxMdpError(Exception):
    """Base class of every error raised by cvxmdp."""


class ConfigurationError(CvxMdpError, ValueError):
    """Invalid configuration or mismatched dimensions."""


class ArgumentError(CvxMdpError, ValueError):
    """A call argument is outside its documented range."""


class DomainError(CvxMdpError, ValueError):
    """A dual point lies outside the domain of a conjugate."""


class SlaterViolationError(CvxMdpError, ValueError):
    """The declared Slater point does not satisfy g < 0."""


class NumericalError(CvxMdpError, RuntimeError):
    """An iterative routine did not converge."""

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None):
        super().__init__(message)
        self.diagnostics: dict[str, Any] = diagnostics or {}

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{base} ({details})"


class BudgetError(CvxMdpError, RuntimeError):
    """An enumeration exceeded its configured budget."""
