"""Exception types raised across the package."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to produce a trustworthy result."""


class DegenerateInputError(ValueError):
    """Input is well-formed but degenerate for the requested operation."""


class RankDeficientError(NumericalError):
    """A matrix that must be full rank is (numerically) rank deficient."""


class FileFormatError(ValueError):
    """A dataset or checkpoint file is malformed.

    Parameters
    ----------
    message : str
        Human readable description.
    record : int, optional
        Zero-based record index the problem was found in.
    """

    def __init__(self, message, record=None):
        if record is not None:
            message = f"record {record}: {message}"
        super().__init__(message)
        self.record = record


class NotFittedError(ValueError, AttributeError):
    """Estimator used before ``fit``."""
