"""Exception types shared across the package."""


class SuperLseError(Exception):
    """Base class for all errors raised by this package."""


class NotPositiveDefinite(SuperLseError):
    """A matrix that must be Hermitian positive definite is not.

    Raised when a Toeplitz decomposition encounters a non-positive pivot,
    which indicates either a caller bug or catastrophic loss of precision.
    """


class DimensionMismatch(SuperLseError):
    """Vector/matrix dimensions are inconsistent."""


class InvalidPattern(SuperLseError):
    """An operation requiring complete observations got incomplete data."""


class NoActiveComponents(SuperLseError):
    """An operation requires at least one active sinusoid component."""


class LineSearchFailed(SuperLseError):
    """No acceptable step length was found; treat the point as converged."""


class InfeasibleSeparation(SuperLseError):
    """Requested frequency separation cannot be satisfied on the unit circle."""
