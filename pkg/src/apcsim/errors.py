"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid configuration value or combination."""


class ParseError(ValueError):
    """Malformed input file; carries the byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class SchemaError(ValueError):
    """Input file parsed but a required field is missing or invalid."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
