"""Exception hierarchy shared by all modules."""


class PerturbOpError(Exception):
    """Base class for errors raised by this package."""


class DomainError(PerturbOpError, ValueError):
    """An argument lies outside the domain of the object it is evaluated on."""


class NumericError(PerturbOpError, ArithmeticError):
    """A non-finite or otherwise unusable floating-point value was produced."""


class CapacityError(PerturbOpError):
    """A requested computation exceeds a configured size cap."""


class DivergenceError(PerturbOpError):
    """A series failed to exhibit a certified geometric tail."""


class BracketFailure(PerturbOpError):
    """No valid radius bracket exists for a profile."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ShapeError(PerturbOpError, ValueError):
    """A word does not have the shape required by a bound."""
