# pose_boost/api.py
# The primary, programmer-facing API for the library.

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Mapping, Sequence

from pose_boost.cache import RunCache
from pose_boost.config import ExperimentConfig, load_experiment
from pose_boost.fmaps import dump_feature_maps
from pose_boost.models import AblationAxis, AblationRow, MetricsReport, TrainResult
from pose_boost.skeleton import load_graph, validate
from pose_boost.synth import generate_dataset
from pose_boost.training import DEFAULT_SEEDS, ablate, evaluate, train

log = logging.getLogger(__name__)


def _experiment(
    config: ExperimentConfig | Path | str | None, overrides: Mapping[str, Any] | None
) -> ExperimentConfig:
    if isinstance(config, ExperimentConfig):
        return config.replace(overrides) if overrides else config
    exp = load_experiment(config, overrides=overrides)
    log.debug("Loaded configuration (digest %s)", exp.digest.hex()[:12])
    return exp


def train_model(
    config: ExperimentConfig | Path | str | None,
    out_dir: Path | str,
    *,
    resume: Path | str | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> TrainResult:
    """
    Train a network and write its checkpoint and JSONL log into `out_dir`.

    Args:
        config: An experiment config, a TOML file, or None for defaults plus pyproject.
        out_dir: Destination of ``model.ckpt`` and ``train_log.jsonl``.
        resume: Checkpoint to continue from; its config digest must match.
        overrides: Nested values merged over the loaded config.
    """
    exp = _experiment(config, overrides)
    log.info("Training %s network on graph %s (%s)", exp.network.boosting, exp.graph.name, exp.graph.variant)
    return train(exp, out_dir, resume=resume)


def evaluate_checkpoint(
    checkpoint: Path | str, data: Path | str, thresholds: Sequence[float] | None = None
) -> MetricsReport:
    log.info("Evaluating %s on %s", checkpoint, data)
    return evaluate(checkpoint, data, thresholds)


def run_ablation(
    axis: AblationAxis,
    config: ExperimentConfig | Path | str | None = None,
    *,
    seeds: Sequence[int] | None = None,
    out_dir: Path | str = "runs",
    overrides: Mapping[str, Any] | None = None,
    use_cache: bool = True,
) -> list[AblationRow]:
    """Train and score every variant of one ablation axis; cached results are reused."""
    exp = _experiment(config, overrides)
    seeds = list(seeds) if seeds else list(DEFAULT_SEEDS)
    log.info("Ablating %s over seeds %s", axis, seeds)
    if not use_cache or not exp.cache.enabled:
        return ablate(exp, axis, seeds=seeds, out_dir=out_dir)
    with RunCache(exp.cache) as cache:
        return ablate(exp, axis, seeds=seeds, out_dir=out_dir, cache=cache)


def generate_data(
    config: ExperimentConfig | Path | str | None,
    out_dir: Path | str,
    *,
    overrides: Mapping[str, Any] | None = None,
) -> dict[str, Path]:
    """Write the train and test splits as ``<out_dir>/train`` and ``<out_dir>/test``."""
    exp = _experiment(config, overrides)
    out = Path(out_dir)
    return {
        "train": generate_dataset(exp, out / "train", "train", exp.data.num_train),
        "test": generate_dataset(exp, out / "test", "test", exp.data.num_test),
    }


def dump_fmaps(
    checkpoint: Path | str, image: Path | str, joints: Sequence[int], out_dir: Path | str
) -> list[Path]:
    return dump_feature_maps(checkpoint, image, joints, out_dir)


def validate_graph(path: Path | str, profile: str = "default") -> list[str]:
    """Violations of a graph file; parse errors propagate as GraphError."""
    graph = load_graph(path, strict=False)
    violations = validate(graph, profile)  # type: ignore[arg-type]
    log.info("%s: %d violation(s) under %s", path, len(violations), profile)
    return violations
