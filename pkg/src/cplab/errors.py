"""Exception hierarchy.

Numerical failures map to CLI exit code 3; configuration problems to 2.
"""


class CPLabError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(CPLabError, ValueError):
    """A model or operation was given parameters outside its domain."""


class UnidentifiableModelError(InvalidParameterError):
    """The regime jump vanishes at the threshold, so it cannot be estimated."""


class OutOfParameterSpaceError(InvalidParameterError):
    """A shifted threshold left the open parameter interval."""


class NumericalError(CPLabError, ArithmeticError):
    """Base for failures of a numerical procedure."""


class QuadratureError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InsufficientHitsError(NumericalError):
    """A rare event needed by an estimator was never observed."""


class InsufficientOccupancyError(NumericalError):
    """A conditioning cell of the mixing diagnostic is too sparsely visited."""


class DegeneratePosteriorError(NumericalError):
    pass


class ConfigError(CPLabError):
    pass
