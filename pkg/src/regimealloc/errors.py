"""Exception types shared across the package (mapped to CLI exit codes)."""


class ConfigError(ValueError):
    """Bad or inconsistent run configuration."""


class DataError(ValueError):
    """Input data violates a panel contract or lacks history."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or met a degenerate input."""
