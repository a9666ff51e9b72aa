"""Exception types shared across the package.

Two failure families are distinguished so batch callers can map them to
exit codes: bad inputs (shapes, labels, unparseable files) and numeric
failures (solvers that did not converge).
"""


class InputError(ValueError):
    """Raised when arguments or input files violate a documented contract."""


class NumericError(RuntimeError):
    """Raised when an iterative solver fails to converge.

    Attributes
    ----------
    iterations : int or None
        Number of iterations spent before giving up, when known.
    """

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations
