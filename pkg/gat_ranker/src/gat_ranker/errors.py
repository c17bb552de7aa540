"""Error hierarchy; mirrors the retrieval package's convention of subclassing
ValueError so callers can be as coarse or fine grained as they like."""

from __future__ import annotations


class GatRankerError(Exception):
    """Base class for everything raised deliberately by this package."""


class FeatureFileError(GatRankerError, ValueError):
    """A node-feature file is malformed or inconsistent.

    Carries ``path``/``line_no`` so messages point at the offending record.
    """

    def __init__(self, path, line_no: int, reason: str):
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{self.path}:{line_no}: {reason}")


class ConfigError(GatRankerError, ValueError):
    """Invalid model or training configuration."""
