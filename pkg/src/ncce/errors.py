"""Exception types raised across the package."""


class NcceError(Exception):
    """Base class for all package errors."""


class InvalidInputError(NcceError, ValueError):
    """An argument violates an operation's precondition."""


class ConfigError(NcceError, ValueError):
    """A trial or sweep configuration is inconsistent."""


class DegenerateMatrixError(NcceError, ArithmeticError):
    """A Gram matrix is too ill-conditioned to invert; regenerate the ensemble."""


class CollisionError(NcceError, ArithmeticError):
    """Two estimated frequencies are too close for a joint least-squares fit."""
