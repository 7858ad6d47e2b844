"""Exception and warning types raised by bcpingarch."""


class BcpError(Exception):
    """Base class for all package errors."""


class DomainError(BcpError, ValueError):
    """An argument lies outside the domain of a function."""


class SamplingError(BcpError, OverflowError):
    """A Poisson mean overflowed while simulating."""


class NonStationaryError(BcpError, ValueError):
    """The requested quantity does not exist outside the stationary region."""


class ConvergenceError(BcpError, RuntimeError):
    """Numerical optimization failed.

    Attributes
    ----------
    best : object or None
        Best point seen before giving up (a ``FitResult`` when raised by
        :func:`bcpingarch.estimation.fit`).
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class NumericalError(BcpError, ArithmeticError):
    """A matrix or estimate is numerically unusable (singular, non-finite)."""


class DataError(BcpError, ValueError):
    """Input data failed validation."""


class NumericalWarning(RuntimeWarning):
    """A result saturated, underflowed or lost definiteness."""
