# pose_boost/models.py
# Plain data structures shared by the synthesizer, trainer and reports.

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

Boosting = Literal["none", "fb", "fb_plus"]
AblationAxis = Literal["connections", "cells", "stacks", "boosting", "links"]


@dataclass
class PoseSample:
    """
    One training or evaluation example.

    `joints2d` are (x, y) input-image pixels; `joints_hm` the same points at
    heatmap resolution. `depth` is root-relative and normalized by the
    dataset depth scale, so the root entry is exactly 0.
    """

    id: str
    image: np.ndarray  # [h, w, 3] in [0, 1]
    joints2d: np.ndarray  # [J, 2]
    joints_hm: np.ndarray  # [J, 2]
    depth: np.ndarray  # [J]
    visibility: np.ndarray  # [J] bool
    tags: list[str] = field(default_factory=list)

    @property
    def num_joints(self) -> int:
        return int(self.joints2d.shape[0])

    def annotation(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "joints2d": self.joints2d.tolist(),
            "joints_hm": self.joints_hm.tolist(),
            "depth": self.depth.tolist(),
            "visibility": [bool(v) for v in self.visibility],
            "tags": list(self.tags),
        }


@dataclass
class LossTerms:
    """Heatmap and depth errors and their weighted total ``heatmap + gamma * depth``."""

    heatmap: float
    depth: float
    gamma: float
    total: float

    def record(self) -> dict[str, float]:
        return {"loss": self.total, "loss_heatmap": self.heatmap, "loss_depth": self.depth}


@dataclass
class MetricsReport:
    pck: dict[float, float]
    mean_error: float
    count: int
    pckf: dict[float, float] | None = None
    per_joint: list[float] = field(default_factory=list)
    per_tag: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "pck": {str(k): v for k, v in self.pck.items()},
            "mean_error": self.mean_error,
            "count": self.count,
            "pckf": None if self.pckf is None else {str(k): v for k, v in self.pckf.items()},
            "per_joint": list(self.per_joint),
            "per_tag": dict(self.per_tag),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "MetricsReport":
        pckf = data.get("pckf")
        return cls(
            pck={float(k): float(v) for k, v in data["pck"].items()},
            mean_error=float(data["mean_error"]),
            count=int(data["count"]),
            pckf=None if pckf is None else {float(k): float(v) for k, v in pckf.items()},
            per_joint=[float(v) for v in data.get("per_joint", [])],
            per_tag={k: float(v) for k, v in data.get("per_tag", {}).items()},
        )


@dataclass
class TrainResult:
    checkpoint: str
    log_path: str
    steps: int
    initial_loss: float | None
    final_loss: float


@dataclass
class AblationRow:
    """One variant of a sweep, averaged over seeds."""

    axis: AblationAxis
    variant: str
    seeds: list[int]
    pck: dict[float, float]
    mean_error: float
    per_seed: list[MetricsReport] = field(default_factory=list)

    def record(self) -> dict[str, Any]:
        return {
            "axis": self.axis,
            "variant": self.variant,
            "seeds": list(self.seeds),
            "pck": {str(k): v for k, v in self.pck.items()},
            "mean_error": self.mean_error,
        }
