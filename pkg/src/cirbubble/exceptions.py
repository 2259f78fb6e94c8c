"""Exception hierarchy shared by every module of the package."""


class CirBubbleError(Exception):
    """Base class for all errors raised by :mod:`cirbubble`."""


class DomainError(CirBubbleError, ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class RegimeError(CirBubbleError, ValueError):
    """The requested computation does not apply to this parameter regime.

    Raised, for instance, when the closed-form price is asked for with
    unequal volatilities or when the paste constant ``E`` is negative.
    """


class EvaluationError(CirBubbleError, ArithmeticError):
    """A numerical kernel failed to converge or overflowed.

    The offending arguments are kept on ``args_`` for diagnostics.
    """

    def __init__(self, message, args_=None):
        super().__init__(message)
        self.args_ = args_


class ConvergenceError(CirBubbleError, RuntimeError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SchemeError(CirBubbleError, RuntimeError):
    """A discretisation failed a structural requirement such as monotonicity."""


class ConsistencyError(CirBubbleError, RuntimeError):
    """A post-hoc invariant check failed on a computed result."""
