"""Exception hierarchy shared by every torqflow module."""


class TorqflowError(Exception):
    """Base class for all torqflow failures."""


class ConfigurationError(TorqflowError, ValueError):
    """A configuration value is outside its allowed domain."""


class ValidationError(TorqflowError, ValueError):
    """An input object violates one of its structural invariants."""


class DomainError(TorqflowError, ValueError):
    """A geometric precondition (convexity, star-shapedness) fails."""


class ConvexityLost(DomainError):
    """The evolving body stopped being strictly convex.

    ``snapshot`` holds whatever state was current when the check failed.
    """

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot


class SolverError(TorqflowError, RuntimeError):
    """An iterative solve did not reach its tolerance."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NumericalError(TorqflowError, ArithmeticError):
    """A computed quantity came out non-finite or degenerate."""
