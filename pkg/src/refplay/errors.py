"""Exception types shared across the package."""


class RefplayError(Exception):
    """Base class for all package errors."""


class DataParseError(RefplayError):
    """Input file could not be parsed."""


class SchemaError(RefplayError):
    """Parsed input violates the dataset schema."""


class ConfigError(RefplayError):
    """Invalid run or game configuration."""


class ProtocolError(RefplayError):
    """Speaker and listener disagree on the message contract."""


class NumericError(RefplayError):
    """Non-finite values encountered in a numeric computation."""


class TrainingDivergence(NumericError):
    """Training loss became non-finite."""
