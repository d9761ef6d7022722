"""Exception and warning types shared across the package."""


class SpecNmfError(Exception):
    """Base class for all package errors."""


class InputError(SpecNmfError, ValueError):
    """Invalid numeric input (shape mismatch, non-finite values, bad ranges)."""


class ParseError(SpecNmfError, ValueError):
    """Malformed text input. ``location`` names the offending line or row."""

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)


class UnsupportedVersionError(ParseError):
    pass


class ValidationError(SpecNmfError, ValueError):
    """A domain object violates one of its invariants."""


class UndefinedVarianceError(SpecNmfError, ArithmeticError):
    pass


class NumericalError(SpecNmfError, ArithmeticError):
    """A numerical routine failed to converge."""


class DegenerateVectorWarning(UserWarning):
    """An all-zero vector made a similarity undefined; 0 was substituted."""
