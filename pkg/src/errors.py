#!/usr/bin/env python3
"""
Errors Module

Exception hierarchy shared by every part of the toolkit. The CLI catches
LogGroupError and turns it into a one-line message with exit code 1.
"""

from typing import Optional


class LogGroupError(Exception):
    """Base class for all toolkit errors."""


class InvalidSchemeError(LogGroupError, ValueError):
    """A group size array cannot be built for the requested (channels, groups)."""


class UnsupportedChannelsError(InvalidSchemeError):
    """Logarithmic grouping requested for a channel count that is not a power of two."""


class UnknownSchemeError(LogGroupError, KeyError):
    """Scheme name is not one of the canonical scheme tables."""

    def __str__(self) -> str:
        # KeyError wraps its message in quotes otherwise
        return str(self.args[0]) if self.args else ""


class ShapeError(LogGroupError, ValueError):
    """Tensor shapes do not line up for an operation."""


class InvalidLayerError(LogGroupError, ValueError):
    """A layer definition is inconsistent (empty group, mismatched halves)."""


class InvalidSpecError(LogGroupError, ValueError):
    """A NetworkSpec is inconsistent with the grouping it carries."""


class NumericFailureError(LogGroupError, ArithmeticError):
    """NaN or Inf encountered in a forward value, gradient or update."""

    def __init__(self, message: str, node: Optional[str] = None):
        super().__init__(message)
        self.node = node


class DataError(LogGroupError, ValueError):
    """Dataset content is unusable (bad label, empty split)."""


class IngestionError(DataError):
    """A dataset file is missing or malformed."""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.path = path


class CorruptRecordError(IngestionError):
    """A CIFAR-10 record carries a label byte outside 0..9."""


class DegenerateChannelError(DataError):
    """A channel has zero standard deviation and cannot be normalized."""


class AugmentationConfigError(LogGroupError, ValueError):
    """Affine augmentation parameter outside the published grid."""


class ScheduleExhaustedError(LogGroupError, IndexError):
    """Learning rate requested for an epoch past the end of the schedule."""


class CheckpointError(LogGroupError, IOError):
    """Checkpoint file is malformed or does not match the model."""


class ReportError(LogGroupError, ValueError):
    """Comparison report cannot be produced as requested."""


class ConfigError(LogGroupError, ValueError):
    """Configuration file or flag value is invalid."""
