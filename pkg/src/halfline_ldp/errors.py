"""Exception types shared across modules."""


class UnsupportedError(ValueError):
    """A model/event combination the solver does not handle."""


class ConfigError(ValueError):
    """Invalid run configuration (bad field, missing value, wrong type)."""
