"""Error taxonomy shared across the package."""


class CapacityError(RuntimeError):
    """Raised when an exact enumeration would exceed the configured cap."""


class DegenerateConditioningError(ValueError):
    """Raised when conditioning on an event of zero probability."""


class ConfigError(ValueError):
    """Raised when a run configuration is malformed."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative numerical routine fails to reach tolerance."""
