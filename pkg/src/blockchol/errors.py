"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class NotPositiveDefiniteError(ValueError):
    """Raised when a matrix required to be SPD fails its Cholesky test."""
