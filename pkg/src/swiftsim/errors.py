"""Exception hierarchy shared by every module."""


class SwiftError(Exception):
    """Base class for all errors raised by swiftsim."""


class InvalidArgument(SwiftError, ValueError):
    pass


class NotFound(SwiftError, KeyError):
    def __str__(self):
        # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class OutOfRange(SwiftError, ValueError):
    pass


class NoTransition(SwiftError, ValueError):
    """The waveform has no detectable level change around the event."""


class DegenerateBasis(SwiftError, ArithmeticError):
    """Regression basis is rank deficient beyond the ridge threshold."""


class EvaluationError(SwiftError, RuntimeError):
    """A fitness evaluation returned a non-finite value."""

    def __init__(self, message, particle=None, iteration=None):
        super().__init__(message)
        self.particle = particle
        self.iteration = iteration
