"""Exception hierarchy shared by every module of the package."""


class SteinQueuesError(Exception):
    """Base class for all package errors."""


class ParameterError(SteinQueuesError, ValueError):
    """A numeric parameter is outside its admissible range."""


class ShapeError(SteinQueuesError, ValueError):
    """Two objects that must share a horizon or grid do not."""


class DomainError(SteinQueuesError, ValueError):
    """An argument lies outside the domain of a function."""


class DivergenceError(SteinQueuesError, ArithmeticError):
    """A norm or integral requested is infinite for this input."""


class UnsupportedError(SteinQueuesError, NotImplementedError):
    """The operation is not offered for this representation or regime."""


class UnsupportedKernelError(UnsupportedError):
    pass


class UnsupportedRegimeError(UnsupportedError):
    pass


class ToleranceError(SteinQueuesError, RuntimeError):
    """A quadrature or iterative method missed its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class FunctionalError(SteinQueuesError, ArithmeticError):
    pass


class PreconditionError(SteinQueuesError, ValueError):
    pass


class ResolutionError(SteinQueuesError, ValueError):
    pass


class FitError(SteinQueuesError, ValueError):
    pass


class ConfigError(SteinQueuesError, ValueError):
    pass
