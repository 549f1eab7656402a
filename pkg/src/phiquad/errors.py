"""Exception hierarchy."""


class PhiQuadError(Exception):
    """Base class for all errors raised by phiquad."""


class SpecParseError(PhiQuadError, ValueError):
    pass


class DomainError(PhiQuadError, ValueError):
    """A point lies outside the effective domain of the conjugate."""


class DegenerateInput(PhiQuadError, ValueError):
    """The input distribution is constant where a nonconstant one is required."""


class UnboundedError(PhiQuadError):
    pass


class KinkResolutionError(PhiQuadError):
    """No subgradient selection at kinks satisfies the envelope constraints."""


class NonsmoothSpecError(PhiQuadError, ValueError):
    pass


class HomogeneityError(PhiQuadError, ValueError):
    pass


class NonConvergence(PhiQuadError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InputError(PhiQuadError, ValueError):
    """Malformed CSV or configuration input."""


class GridExhausted(PhiQuadError, UserWarning):
    """A grid supremum landed on the grid boundary; the value is only a lower bound."""
