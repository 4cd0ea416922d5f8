"""Exception types shared across the package.

Numerical failures derive from :class:`NumericalError` and carry an optional
``context`` dict (task coordinates, parameter values) so the CLI can report
them as machine-readable JSON.
"""

from __future__ import annotations


class QGTLabError(Exception):
    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = dict(context)

    def with_context(self, **extra):
        self.context.update(extra)
        return self

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self), "context": self.context}


class ConfigError(QGTLabError):
    pass


class NumericalError(QGTLabError):
    pass


class DegeneratePoint(NumericalError):
    """The two levels touch; the geometric tensor is undefined there."""


class InvalidStep(NumericalError):
    pass


class SingularMetric(NumericalError):
    pass


class GridTooCoarse(NumericalError):
    pass


class WindowTooNarrow(NumericalError):
    pass


class AdiabaticityViolation(NumericalError):
    pass


class AdiabaticityWarning(UserWarning):
    pass
