"""Exception hierarchy shared by every module."""


class WpcrError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameter(WpcrError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class InvalidInput(WpcrError, ValueError):
    """Input data (samples, vectors, matrices) is malformed."""


class NumericFailure(WpcrError, ArithmeticError):
    """A numerical routine failed to produce a trustworthy result."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class InvalidSpec(WpcrError, ValueError):
    """Spectral data or an experiment description is inconsistent."""


class UnsupportedSpec(WpcrError, ValueError):
    """The requested operation is not defined for this kind of input."""


class BelowThreshold(WpcrError, ValueError):
    """Sample size is below the validity threshold of a bound."""

    def __init__(self, n, threshold):
        super().__init__(f"n = {n} is not above the validity threshold {threshold}")
        self.n = n
        self.threshold = threshold


class RunFailure(WpcrError, RuntimeError):
    """Too many replications were flagged during an experiment run."""
