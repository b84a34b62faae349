# Entrypoint for the pose_boost package.
# This file makes the public API available to programmers.

from __future__ import annotations

from pose_boost.__about__ import __version__
from pose_boost.api import (
    dump_fmaps,
    evaluate_checkpoint,
    generate_data,
    run_ablation,
    train_model,
    validate_graph,
)
from pose_boost.config import ExperimentConfig, load_experiment
from pose_boost.errors import (
    CheckpointError,
    ConfigError,
    GradCheckError,
    GraphError,
    PoseBoostError,
    ShapeError,
    SynthError,
)
from pose_boost.models import AblationRow, LossTerms, MetricsReport, PoseSample, TrainResult
from pose_boost.network import PoseNet
from pose_boost.tensor import Tape, Tensor, backward

__all__ = [
    "AblationRow",
    "CheckpointError",
    "ConfigError",
    "ExperimentConfig",
    "GradCheckError",
    "GraphError",
    "LossTerms",
    "MetricsReport",
    "PoseBoostError",
    "PoseNet",
    "PoseSample",
    "ShapeError",
    "SynthError",
    "Tape",
    "Tensor",
    "TrainResult",
    "__version__",
    "backward",
    "dump_fmaps",
    "evaluate_checkpoint",
    "generate_data",
    "load_experiment",
    "run_ablation",
    "train_model",
    "validate_graph",
]
