"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigurationError -> 1,
DataFormatError -> 2, NumericalError -> 3.
"""


class ConfigurationError(ValueError):
    """Invalid configuration value, unknown key, or inconsistent settings."""


class DataFormatError(ValueError):
    """Malformed dataset file or sequence that violates the data contract."""


class NumericalError(RuntimeError):
    """Non-finite loss or other numeric failure during training/inference."""
