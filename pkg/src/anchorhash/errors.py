"""Exception types shared across the package.

The CLI maps these onto exit codes: data and configuration problems exit
with 2, numeric failures (degenerate spectra, non-finite gradients,
failed factorizations) exit with 1.
"""


class DataFormatError(ValueError):
    """A file or in-memory array violates a documented format contract."""


class ConfigError(ValueError):
    """A run configuration is incomplete, contradictory, or has unknown keys."""


class NumericError(RuntimeError):
    """A numeric routine failed to produce a usable result."""
