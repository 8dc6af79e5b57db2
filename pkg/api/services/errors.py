"""
Error hierarchy for the isoprofile workbench.

Every module raises a subclass of IsoprofileError. Routers map these to
HTTP 422 and the CLI maps them to a nonzero exit with the structured
payload from to_dict().
"""

from typing import Any, Optional


class IsoprofileError(Exception):
    """Base error carrying a stable code and structured context."""

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context

    @property
    def code(self) -> str:
        return type(self).__name__

    def to_dict(self) -> dict:
        return {
            "error": self.code,
            "message": self.message,
            "context": {k: _plain(v) for k, v in self.context.items()},
        }


def _plain(value: Any) -> Any:
    if isinstance(value, (str, int, bool)) or value is None:
        return value
    if isinstance(value, float):
        return value if value == value and abs(value) != float("inf") else str(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    return str(value)


# Input parsing

class GraphFormatError(IsoprofileError):
    """Malformed graph or profile description."""

    def __init__(self, message: str, location: Optional[str] = None, **context: Any):
        super().__init__(message, location=location, **context)
        self.location = location


# Level graph

class TrivalenceViolation(IsoprofileError):
    pass


class DuplicateCriticalValue(IsoprofileError):
    pass


class ValueGap(IsoprofileError):
    pass


class EmptyLevel(IsoprofileError):
    pass


class EdgeOrientationError(IsoprofileError):
    pass


class NuTooSmall(IsoprofileError):
    pass


# Surfaces and calibration

class BadParameters(IsoprofileError):
    pass


class GluingMismatch(IsoprofileError):
    pass


class OutOfChart(IsoprofileError):
    pass


class NotSublevel(IsoprofileError):
    pass


class NoSpareComponent(IsoprofileError):
    pass


class ExclusionOverlap(IsoprofileError):
    pass


# Profiles and revolution surfaces

class NonPositiveProfile(IsoprofileError):
    pass


class BadOrigin(IsoprofileError):
    pass


class ConstraintViolation(IsoprofileError):
    """A cap property failed; `prop` names the first failing one."""

    def __init__(self, prop: str, v: Optional[float] = None, **context: Any):
        where = f" at v={v:.6g}" if v is not None else ""
        super().__init__(f"constraint violated: {prop}{where}", prop=prop, v=v, **context)
        self.prop = prop
        self.v = v


class HypothesisFailure(IsoprofileError):
    """A merge hypothesis failed; `bullet` is its name."""

    def __init__(self, bullet: str, **context: Any):
        super().__init__(f"hypothesis failed: {bullet}", bullet=bullet, **context)
        self.bullet = bullet


class DomainError(IsoprofileError):
    pass


# Conformal constructions

class NonConvexProfile(IsoprofileError):
    pass


class NoBlowup(IsoprofileError):
    pass


class TargetUnreachable(IsoprofileError):
    pass
