"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible dimensions."""


class EmptyInputError(ValueError):
    """An input that must be non-empty was empty."""


class ConfigError(ValueError):
    """A configuration value is out of range or inconsistent."""


class StateError(RuntimeError):
    """An operation was invoked in an invalid order (e.g. backward before forward)."""


class TrainingError(RuntimeError):
    """Training hit a non-recoverable numeric condition."""


class InsufficientDataError(RuntimeError):
    """Not enough data to estimate the requested quantity."""
