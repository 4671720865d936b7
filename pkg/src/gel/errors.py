"""Shared exception types."""


class FormatError(ValueError):
    """A binary artifact failed to parse (bad magic, version, or truncation)."""


class ConfigError(ValueError):
    """A config file or flag combination is invalid."""


class DataError(RuntimeError):
    """Input data is missing or malformed."""
