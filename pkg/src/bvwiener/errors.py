"""Exception hierarchy shared by every module."""


class BVWienerError(Exception):
    """Base class for all package errors."""


class InvalidArgument(BVWienerError, ValueError):
    pass


class AlignmentError(BVWienerError, ValueError):
    """A time or breakpoint does not sit on the simulation grid.

    Raised instead of interpolating: callers must refine the grid.
    """


class NumericError(BVWienerError, ArithmeticError):
    pass


class ConditioningError(BVWienerError, ArithmeticError):
    """Gaussian conditioning is singular or numerically inconsistent."""
