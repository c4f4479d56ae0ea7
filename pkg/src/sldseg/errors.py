"""Exception and warning types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration, data file, or argument combination."""


class NumericalError(RuntimeError):
    """A numerical routine produced a non-finite or non-SPD result."""


class ElboDecreaseWarning(UserWarning):
    """The objective dropped by more than the configured tolerance in one sweep."""
