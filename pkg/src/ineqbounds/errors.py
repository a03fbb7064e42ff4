"""Exception hierarchy shared by every module."""


class IneqBoundsError(Exception):
    """Base class for all package errors."""


class NonPositiveMean(IneqBoundsError, ValueError):
    pass


class IndexOutOfRange(IneqBoundsError, ValueError):
    pass


class NoPointData(IneqBoundsError, ValueError):
    pass


class InfeasibleConstraints(IneqBoundsError):
    """The constrained feasible set is empty."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class DegenerateDenominator(IneqBoundsError):
    pass


class NumericalFailure(IneqBoundsError):
    pass


class BracketViolation(IneqBoundsError, ValueError):
    pass


class Stalled(NumericalFailure):
    pass


class SubproblemNotConverged(NumericalFailure):
    pass


class QuantileOnBoundary(IneqBoundsError, ValueError):
    pass


class ResampleInfeasible(IneqBoundsError):
    pass


class TooLarge(IneqBoundsError, ValueError):
    pass


class NoFeasibleAssignment(IneqBoundsError):
    pass


class ParseError(IneqBoundsError, ValueError):
    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column!r})" if column is not None else ")")
        super().__init__(message + where)
        self.line = line
        self.column = column


class OverlapError(ParseError):
    pass


class NegativeCount(ParseError):
    pass


class UnknownKind(ParseError):
    pass


class BadGroupIndex(IneqBoundsError, ValueError):
    pass
