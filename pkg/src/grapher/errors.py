"""Shared exception types."""


class GrapherError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(GrapherError, ValueError):
    """A file could not be parsed; message names the path and line number."""

    def __init__(self, path, line_no: int, reason: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {reason}")


class ValidationError(GrapherError, ValueError):
    """Input data violates a documented invariant."""


class ConfigError(GrapherError, ValueError):
    """A configuration value is out of its documented domain."""
