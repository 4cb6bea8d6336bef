"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """Raised when an input violates a documented precondition."""


class NumericalError(ArithmeticError):
    """Raised when a computation breaks down (indefinite system, divergence, ...)."""


class DatasetFormatError(ValueError):
    """Raised when a dataset directory is readable but inconsistent."""
