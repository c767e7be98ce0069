"""Exception hierarchy shared by the toolkit.

The CLI maps these onto exit codes: configuration problems exit with 2,
data problems with 3, numeric divergence with 4.
"""


class PuChurnError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(PuChurnError):
    """Invalid configuration: unknown keys, bad types, violated constraints."""


class DataError(PuChurnError):
    """Invalid data: parse failures, schema mismatches, broken invariants."""


class DivergenceError(PuChurnError):
    """Numeric optimisation produced non-finite values."""
