"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or out-of-range input."""


class DomainError(ValueError):
    """A quantity is undefined at the requested point (e.g. a zero denominator)."""


class PreconditionError(ValueError):
    """A mathematical precondition of an operation does not hold."""


class NumericError(RuntimeError):
    """An iterative computation failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CapacityError(RuntimeError):
    """A search or schedule ran out of its configured budget."""
