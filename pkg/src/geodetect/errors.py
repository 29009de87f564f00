"""Exception hierarchy shared by all modules."""


class GeodetectError(Exception):
    """Base class for package errors."""


class InvalidSpectrumError(GeodetectError, ValueError):
    """Spectrum is empty, negative, non-finite or identically zero."""


class InvalidParameterError(GeodetectError, ValueError):
    """A scalar parameter is outside its admissible range."""


class ShapeError(GeodetectError, ValueError):
    """Array dimensions do not match."""


class UsageError(GeodetectError, ValueError):
    """An operation was called with the wrong kind of input."""


class NumericError(GeodetectError, ArithmeticError):
    """A numerical routine failed (bracketing, factorization, domain)."""


class ToleranceError(NumericError):
    """Requested tolerance was not reached.

    Attributes
    ----------
    achieved : float
        Error estimate that was reached.
    partial : object
        Best available result, if any.
    """

    def __init__(self, message, achieved=float("nan"), partial=None):
        super().__init__(message)
        self.achieved = achieved
        self.partial = partial


class ValidityError(GeodetectError, ValueError):
    """Inputs lie outside the validity region of an analytic bound."""
