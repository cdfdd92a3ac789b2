"""Exception types shared across the package."""


class FlatmcError(Exception):
    """Base class for package errors."""


class InputError(FlatmcError, ValueError):
    """Malformed or inconsistent input."""


class HypothesisError(FlatmcError, ValueError):
    """A structural hypothesis required by a construction does not hold."""


class PreconditionError(FlatmcError, ValueError):
    """A bound's validity condition is violated."""

    def __init__(self, message: str, margin: float | None = None):
        super().__init__(message)
        self.margin = margin


class UnsupportedError(FlatmcError, NotImplementedError):
    """The requested regime is not covered."""


class NumericalError(FlatmcError, ArithmeticError):
    """Overflow, underflow or a non-finite intermediate."""


class DivergenceError(NumericalError):
    """A Markov chain produced a non-finite state."""

    def __init__(self, iteration: int):
        super().__init__(f"chain diverged at iteration {iteration}")
        self.iteration = iteration


class EnvelopeError(FlatmcError, RuntimeError):
    """Rejection envelope too loose (acceptance rate below the floor)."""


class BoxTooSmallError(FlatmcError, ValueError):
    """Quadrature box leaves too much mass on its boundary."""


class PrecisionError(FlatmcError, RuntimeError):
    """Monte Carlo relative error above the requested level."""
