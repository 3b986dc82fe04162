"""Exception hierarchy shared by the engine, the file formats and the CLI."""

from __future__ import annotations

__all__ = [
    "DogmError",
    "ValidationError",
    "ConfigError",
    "ScanFormatError",
    "TimestampError",
]


class DogmError(Exception):
    """Base class for every error raised by :mod:`rdogm`."""


class ValidationError(DogmError, ValueError):
    """A parameter, grid spec or measurement violates its invariants."""


class ConfigError(DogmError):
    """The configuration file is unreadable or names an invalid key."""

    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"{key}: {message}")
        self.key = key


class ScanFormatError(DogmError):
    """A line of a scan / ground-truth / detections file cannot be parsed."""

    def __init__(self, path: str, line: int, message: str) -> None:
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class TimestampError(DogmError):
    """Timestamps are not strictly increasing, or two streams do not align."""

    def __init__(self, message: str, timestamps: list[float] | None = None) -> None:
        super().__init__(message)
        self.timestamps = list(timestamps or [])
