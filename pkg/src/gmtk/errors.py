"""Exception types shared across the toolkit."""


class ValidationError(ValueError):
    """Bad input or parameter out of range."""


class UndefinedDistanceError(ValidationError):
    """A set distance was requested for a set that misses the window."""


class InfeasibleCoverError(ValidationError):
    """The candidate pool does not cover the region."""


class PoolTooLargeError(ValidationError):
    """The exact cover search was asked to run beyond its size limits."""


class HypothesisError(ValidationError):
    """A construction was fed a cube violating its required hypothesis."""


class InvariantError(AssertionError):
    """An internal invariant failed. Never raised for user mistakes."""
