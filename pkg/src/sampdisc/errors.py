"""Exception types shared across the toolkit."""


class SampDiscError(Exception):
    """Base class for all toolkit errors."""


class DomainError(SampDiscError, ValueError):
    """A parameter lies outside the domain where a formula is defined."""


class UnderResolvedGrid(SampDiscError):
    """The reference grid is too coarse for the requested quadrature."""


class DegenerateDraw(SampDiscError):
    """A random draw produced the zero function too many times."""


class NormalizationError(SampDiscError):
    """A function does not carry the normalization an operation requires."""


class SurrogateTooCoarse(SampDiscError):
    """A radius was requested below what the surrogate ball can resolve."""


class InvalidLadder(SampDiscError):
    """Ladder parameters are inconsistent with the ball they cover."""


class PremiseFailed(SampDiscError):
    """The sampling premise of the sandwich implication does not hold."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConstraintViolation(SampDiscError):
    """A random-variable family breaks the moment constraints of the tail bound."""


class SearchExhausted(SampDiscError):
    """Point-set search ran out of restarts without meeting its target."""

    def __init__(self, message, pointset=None, report=None):
        super().__init__(message)
        self.pointset = pointset
        self.report = report
