"""Exception taxonomy mapped to CLI exit codes (see harness.cli)."""


class ConfigError(Exception):
    """Bad or inconsistent run configuration (exit code 2)."""


class DataError(Exception):
    """Malformed dataset/checkpoint/prediction input (exit code 3)."""


class DivergenceError(Exception):
    """Training produced a non-finite or runaway loss (exit code 4)."""
