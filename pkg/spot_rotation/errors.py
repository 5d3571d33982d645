"""
Exception types raised across the toolkit.
All derive from built-in exceptions so callers can catch them generically.
"""

from pathlib import Path
from typing import Optional, Union

import click


class ConfigError(ValueError):
    """Invalid configuration value, key or range."""


class GenerationError(RuntimeError):
    """Scene sampling could not satisfy its constraints."""


class BehindCameraError(ValueError):
    """A point lies at or behind the camera plane."""


class DegenerateModelError(ValueError):
    """A bike model has a zero-size extent."""


class SubgradientPointError(ArithmeticError):
    """Gradient requested exactly at a non-differentiable configuration."""


class PairingError(ValueError):
    """Prediction, truth or image files do not pair up by stem."""


class LabelFormatError(ValueError):
    """Malformed line in a label or prediction file."""

    def __init__(self, path: Union[str, Path], line_no: int, reason: str):
        self.path = Path(path)
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{self.path}:{line_no}: {reason}")

    def __reduce__(self):
        return (self.__class__, (str(self.path), self.line_no, self.reason))


class InputUsageError(click.UsageError):
    """Usage error reported with the input-error exit code."""

    exit_code = 1

    def __init__(self, message: str, ctx: Optional[click.Context] = None):
        super().__init__(message, ctx)
