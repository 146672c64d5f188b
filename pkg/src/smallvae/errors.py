"""Exception hierarchy for smallvae."""

from pathlib import Path
from typing import Optional, Sequence


class SmallVaeError(Exception):
    """Base class for all smallvae errors."""


class ShapeError(SmallVaeError):
    """Operand shapes do not satisfy an operation's contract."""


class DomainError(SmallVaeError):
    """An input value lies outside an operation's mathematical domain.

    Attributes:
        op: Name of the operation that rejected the input
        index: Multi-index of the first offending element
    """

    def __init__(self, op: str, index: Sequence[int], message: str = ""):
        self.op = op
        self.index = tuple(int(i) for i in index)
        detail = message or "value outside domain"
        super().__init__(f"{op}: {detail} at index {self.index}")


class NonFiniteError(SmallVaeError):
    """A NaN or Inf appeared where only finite values are allowed.

    Attributes:
        op: Name of the operation (or training stage) that produced it
        index: Multi-index of the first non-finite element, if known
    """

    def __init__(self, op: str, index: Optional[Sequence[int]] = None, message: str = ""):
        self.op = op
        self.index = tuple(int(i) for i in index) if index is not None else None
        where = f" at index {self.index}" if self.index is not None else ""
        super().__init__(f"{op}: non-finite value{where}{': ' + message if message else ''}")


class GradientError(SmallVaeError):
    """Backward pass or optimizer step cannot proceed."""


class ConfigError(SmallVaeError):
    """Run configuration is invalid."""


class LabelError(SmallVaeError):
    """Class labels are missing or out of range."""


class FreezeViolation(SmallVaeError):
    """A frozen parameter changed during training. Always a bug."""


class _PathError(SmallVaeError):
    def __init__(self, path: Path | str, message: str):
        self.path = Path(path)
        super().__init__(f"{self.path}: {message}")


class DataError(_PathError):
    """Dataset files are missing, truncated or malformed."""


class CheckpointError(_PathError):
    """Checkpoint container cannot be read or written."""


class OutputError(_PathError):
    """A result file could not be written."""
