class InvalidInputError(ValueError):
    """Raised when arguments violate an operation's preconditions."""


class NumericalFailure(RuntimeError):
    """Raised when a numerical procedure cannot produce a usable result."""
