"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """Raised when an argument violates an operation's preconditions."""


class UnsupportedOperationError(NotImplementedError):
    """Raised when a system or policy does not provide a requested capability."""
