"""Exception hierarchy.

Every domain error derives from :class:`BykovError`; the command-line layer maps
those to exit code 1, while configuration syntax problems map to exit code 2.
"""

from __future__ import annotations


class BykovError(Exception):
    """Base class for all domain errors raised by the package."""


# parameters and families
class ParameterError(BykovError):
    pass


class EigenvalueOrder(ParameterError):
    pass


class StabilityViolated(ParameterError):
    pass


class NonFocus(ParameterError):
    pass


class GeometryError(ParameterError):
    pass


class ZeroMismatch(ParameterError):
    pass


class SignConvention(ParameterError):
    pass


# coordinates and maps
class OutOfDomain(BykovError):
    pass


class NonPositiveHeight(OutOfDomain):
    pass


class NonPositiveRadius(OutOfDomain):
    pass


# helices and root finding
class NotAGraph(BykovError):
    pass


class NonPositive(BykovError):
    pass


class NoBracket(BykovError):
    pass


class EmptyRange(BykovError):
    pass


class ResolutionExhausted(BykovError):
    pass


class TangentRoot(BykovError):
    def __init__(self, message: str, x: float = float("nan"), slope: float = float("nan")):
        super().__init__(message)
        self.x = x
        self.slope = slope


class MaxEventsReached(BykovError):
    def __init__(self, message: str, events=()):
        super().__init__(message)
        self.events = list(events)


class ContinuumOfConnections(BykovError):
    pass


# strips
class CapExceeded(BykovError):
    pass


class NoTangencyFound(BykovError):
    pass


class OrderingViolated(BykovError):
    pass


# dynamics
class NoSolution(BykovError):
    pass


# configuration
class ConfigError(BykovError):
    """Configuration text could not be turned into a model."""


class ParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


class UnknownKey(ConfigError):
    pass


class InvariantViolation(ConfigError):
    pass
