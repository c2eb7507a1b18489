"""Core package: settings, logging and errors."""

from .config import Settings, settings
from .exceptions import DataFormatError, NumericalError, SBVError, UsageError
from .logging import get_logger, setup_logging

__all__ = [
    "DataFormatError",
    "NumericalError",
    "SBVError",
    "Settings",
    "UsageError",
    "get_logger",
    "settings",
    "setup_logging",
]
