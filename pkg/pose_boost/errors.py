# pose_boost/errors.py
# Exception hierarchy shared by every module.

from __future__ import annotations

from typing import Sequence


class PoseBoostError(Exception):
    """Base class for all errors raised by pose_boost."""


class ShapeError(PoseBoostError, ValueError):
    """Operands have incompatible shapes."""

    def __init__(
        self, op: str, left: Sequence[int], right: Sequence[int], detail: str = ""
    ) -> None:
        self.op = op
        self.left = tuple(left)
        self.right = tuple(right)
        msg = f"{op}: incompatible shapes {self.left} and {self.right}"
        if detail:
            msg = f"{msg} ({detail})"
        super().__init__(msg)


class GraphError(PoseBoostError):
    """A skeleton graph file or graph object is invalid."""

    def __init__(self, message: str, location: str | None = None) -> None:
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class ConfigError(PoseBoostError):
    """Configuration is inconsistent or out of range."""


class CheckpointError(PoseBoostError):
    """A checkpoint file is malformed or incompatible."""


class GradCheckError(PoseBoostError):
    """Gradient check hit a non-finite value."""

    def __init__(self, param_index: int, element_index: int, detail: str) -> None:
        self.param_index = param_index
        self.element_index = element_index
        super().__init__(
            f"non-finite value at parameter {param_index}, element {element_index}: {detail}"
        )


class SynthError(PoseBoostError):
    """Synthetic data generation received an impossible configuration."""
