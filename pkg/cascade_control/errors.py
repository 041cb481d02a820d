"""
Exception hierarchy for the package.
"""
from __future__ import annotations

from typing import Any, Dict, List, Optional


class CascadeError(RuntimeError):
    """Root of every error raised by the package."""

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.context: Dict[str, Any] = dict(context or {})


class ConfigError(CascadeError, ValueError):
    """Invalid or incomplete experiment configuration."""


class ConstructionError(CascadeError):
    """A profile could not be built (sign violation, zero in a frozen window, ...)."""


class AdmissibilityError(CascadeError):
    """Geometric or margin preconditions failed (r̄ too large, overlapping windows, ...)."""


class ConvergenceError(CascadeError):
    """An iterative method stopped without meeting its tolerance."""

    def __init__(self, message: str, history: Optional[List[float]] = None, context: Optional[Dict[str, Any]] = None):
        super().__init__(message, context)
        self.history: List[float] = list(history or [])


class BlowUpError(ConvergenceError):
    """The state of a forward solve left the configured bound."""

    def __init__(self, message: str, t: float, bound: float):
        super().__init__(message, context={"t": t, "bound": bound})
        self.t = t
