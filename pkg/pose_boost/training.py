# pose_boost/training.py
"""
Training, evaluation and ablation sweeps.

Every random choice is derived from the three logged seeds: `training.init_seed`
(parameters), `training.shuffle_seed` (batch order and augmentation, keyed by
epoch and step) and `data.seed` (dataset). A run resumed from a checkpoint
therefore follows the same trajectory as an uninterrupted one.
"""
from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from pose_boost.cache import RunCache, run_key
from pose_boost.config import ExperimentConfig, NetworkConfig
from pose_boost.errors import ConfigError
from pose_boost.metrics import evaluate_predictions
from pose_boost.models import AblationAxis, AblationRow, LossTerms, MetricsReport, PoseSample, TrainResult
from pose_boost.network import PoseNet, pixels_to_heatmap
from pose_boost.optim import SGD
from pose_boost.serialization import Checkpoint, load_checkpoint, save_checkpoint
from pose_boost.skeleton import GraphVariant
from pose_boost.synth import Dataset, ensure_dataset, make_heatmap_gt, random_augment, read_dataset
from pose_boost.tensor import Tape, Tensor, backward, get_default_dtype, precision

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.ckpt"
LOG_NAME = "train_log.jsonl"
# Running sums of the current epoch: total, heatmap, depth, step count.
EPOCH_LOSS_KEY = "train.epoch_loss"
EVAL_BATCH = 32

# Variant name -> config overrides, per ablation axis.
ABLATION_AXES: dict[AblationAxis, list[tuple[str, dict]]] = {
    "connections": [
        ("simple_sequence", {"graph": {"variant": "simple_sequence"}}),
        ("physical", {"graph": {"variant": "physical_only"}}),
        ("symmetrical", {"graph": {"variant": "symmetrical_only"}}),
        ("graphical_forward_only", {"graph": {"variant": "graphical_forward_only"}}),
        ("bidirectional", {"graph": {"variant": "bidirectional"}}),
    ],
    "cells": [
        ("convrnn", {"network": {"cell": "convrnn", "boosting": "fb"}}),
        ("convgru", {"network": {"cell": "convgru", "boosting": "fb"}}),
        ("convlstm", {"network": {"cell": "convlstm", "boosting": "fb"}}),
    ],
    "stacks": [
        ("1", {"network": {"stacks": 1}}),
        ("2", {"network": {"stacks": 2}}),
    ],
    "boosting": [
        ("baseline", {"network": {"boosting": "none"}}),
        ("fb", {"network": {"boosting": "fb"}}),
        ("fb_plus", {"network": {"boosting": "fb_plus", "cell": "convlstm"}}),
    ],
    "links": [
        ("default", {"graph": {"variant": "bidirectional"}}),
        ("extended", {"graph": {"variant": "extended"}}),
    ],
}
DEFAULT_SEEDS = (0, 1, 2)


def make_batch(samples: Sequence[PoseSample], net: NetworkConfig) -> tuple[Tensor, Tensor, Tensor]:
    """Images, Gaussian heatmap targets and depth targets for a list of samples."""
    dtype = get_default_dtype()
    fs = net.feature_size
    images = np.stack([s.image for s in samples]).astype(dtype)
    heatmaps = np.stack(
        [
            make_heatmap_gt(pixels_to_heatmap(s.joints2d, net.stride), net.heatmap_sigma, fs, fs, s.visibility)
            for s in samples
        ]
    ).astype(dtype)
    depth = np.stack([s.depth for s in samples]).astype(dtype)
    return Tensor(images), Tensor(heatmaps), Tensor(depth)


def dataset_loss(net: PoseNet, samples: Sequence[PoseSample], batch_size: int = EVAL_BATCH) -> LossTerms:
    """Loss over `samples` without augmentation, weighted by batch size."""
    hm = depth = 0.0
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        images, heatmaps, depths = make_batch(chunk, net.config.network)
        _, terms = net.loss(net.stack_forward(images), heatmaps, depths)
        hm += terms.heatmap * len(chunk)
        depth += terms.depth * len(chunk)
    n = max(len(samples), 1)
    gamma = net.config.network.gamma
    return LossTerms(heatmap=hm / n, depth=depth / n, gamma=gamma, total=hm / n + gamma * (depth / n))


def _check_compatible(config: ExperimentConfig, dataset: Dataset, joints: int) -> None:
    if dataset.joints != joints:
        raise ConfigError(f"dataset has {dataset.joints} joints, the configured graph has {joints}")
    size = dataset.meta.get("input_size")
    if size is not None and size != config.network.input_size:
        raise ConfigError(f"dataset images are {size}px, network expects {config.network.input_size}px")


def _write_record(path: Path, record: dict) -> None:
    with path.open("a", encoding="utf-8") as f:
        f.write(json.dumps(record, sort_keys=True) + "\n")


def _train_state(opt: SGD, running: np.ndarray) -> dict[str, np.ndarray]:
    state = opt.state()
    state[EPOCH_LOSS_KEY] = running.copy()
    return state


def train(
    config: ExperimentConfig,
    out_dir: Path | str,
    *,
    resume: Path | str | None = None,
    variant: GraphVariant | None = None,
    dataset: Dataset | None = None,
) -> TrainResult:
    """Train with SGD, writing ``model.ckpt`` and ``train_log.jsonl`` into `out_dir`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tc = config.training
    variant = variant if variant is not None else config.graph_variant()
    with precision(tc.precision):
        data = dataset if dataset is not None else ensure_dataset(config, "train")
        _check_compatible(config, data, variant.graph.num_joints)
        samples = data.samples

        ckpt: Checkpoint | None = None
        if resume is not None:
            ckpt = load_checkpoint(resume)
            if ckpt.digest != config.digest:
                raise ConfigError(f"{resume} was trained with a different config")
            net = PoseNet.from_checkpoint(ckpt, variant)
        else:
            net = PoseNet.init(config, variant)
        opt = SGD(net.params, tc.learning_rate, tc.momentum, tc.lr_decay, tc.lr_step)
        if ckpt is not None:
            opt.load_state(ckpt.tensors)

        batch_size = min(tc.batch_size, len(samples))
        steps_per_epoch = math.ceil(len(samples) / batch_size)
        total_steps = tc.max_steps or tc.epochs * steps_per_epoch
        log_path = out / LOG_NAME
        if ckpt is None:
            log_path.write_text("", encoding="utf-8")
        _write_record(
            log_path,
            {
                "event": "resume" if ckpt is not None else "start",
                "step": opt.step_count,
                "total_steps": total_steps,
                "data_seed": config.data.seed,
                "init_seed": tc.init_seed,
                "shuffle_seed": tc.shuffle_seed,
                "digest": config.digest.hex(),
            },
        )
        log.info(
            "Training %d steps on %d samples (seeds: data %d, init %d, shuffle %d)",
            total_steps,
            len(samples),
            config.data.seed,
            tc.init_seed,
            tc.shuffle_seed,
        )

        initial = dataset_loss(net, samples).total if ckpt is None else None
        running = np.zeros(4, dtype=np.float64)
        partial = False
        if ckpt is not None:
            if EPOCH_LOSS_KEY in ckpt.tensors:
                running = np.array(ckpt.tensors[EPOCH_LOSS_KEY], dtype=np.float64)
            else:
                partial = opt.step_count % steps_per_epoch != 0
        lr = opt.current_lr()
        while opt.step_count < total_steps:
            step = opt.step_count
            epoch, pos = divmod(step, steps_per_epoch)
            order = np.random.default_rng([tc.shuffle_seed, epoch]).permutation(len(samples))
            batch = [samples[i] for i in order[pos * batch_size : (pos + 1) * batch_size]]
            if tc.augment:
                rng = np.random.default_rng([tc.shuffle_seed, epoch, pos, 1])
                batch = [random_augment(s, rng, config.augment, config.network.stride) for s in batch]
            images, heatmaps, depths = make_batch(batch, config.network)
            with Tape() as tape:
                total, terms = net.loss(net.stack_forward(images), heatmaps, depths)
            backward(tape, total)
            lr = opt.step({name: tape.grad(p) for name, p in net.params.items()})
            running += (terms.total, terms.heatmap, terms.depth, 1.0)

            if pos == steps_per_epoch - 1 or opt.step_count == total_steps:
                total_sum, hm_sum, depth_sum, n = running
                mean_terms = LossTerms(
                    heatmap=float(hm_sum / n),
                    depth=float(depth_sum / n),
                    gamma=config.network.gamma,
                    total=float(total_sum / n),
                )
                record = {"epoch": epoch, "step": opt.step_count, **mean_terms.record(), "lr": lr}
                if partial:
                    record["partial"] = True
                _write_record(log_path, record)
                log.info("epoch %d step %d loss %.6f", epoch, opt.step_count, record["loss"])
                running = np.zeros(4, dtype=np.float64)
                partial = False
            if tc.checkpoint_every and opt.step_count % tc.checkpoint_every == 0 and opt.step_count < total_steps:
                save_checkpoint(out / f"step{opt.step_count:06d}.ckpt", net.to_checkpoint(_train_state(opt, running)))

        final = dataset_loss(net, samples).total
        path = save_checkpoint(out / CHECKPOINT_NAME, net.to_checkpoint(_train_state(opt, running)))
    return TrainResult(
        checkpoint=str(path), log_path=str(log_path), steps=opt.step_count, initial_loss=initial, final_loss=final
    )


def predict_dataset(net: PoseNet, dataset: Dataset) -> np.ndarray:
    """Input-pixel poses ``[N, J, 3]`` for every sample."""
    chunks = [
        net.predict(np.stack([s.image for s in dataset.samples[i : i + EVAL_BATCH]]))
        for i in range(0, len(dataset.samples), EVAL_BATCH)
    ]
    return np.concatenate(chunks) if chunks else np.zeros((0, net.joints, 3))


def ground_truth(dataset: Dataset, depth_scale: float) -> np.ndarray:
    return np.stack([np.column_stack([s.joints2d, s.depth * depth_scale]) for s in dataset.samples])


def evaluate(
    checkpoint: Checkpoint | Path | str,
    data: Dataset | Path | str,
    thresholds: Sequence[float] | None = None,
    *,
    variant: GraphVariant | None = None,
) -> MetricsReport:
    """Decode, root-align and score every sample of `data`."""
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    config = ExperimentConfig.from_dict(ckpt.config)
    dataset = data if isinstance(data, Dataset) else read_dataset(data)
    with precision(config.training.precision):
        net = PoseNet.from_checkpoint(ckpt, variant)
        _check_compatible(config, dataset, net.joints)
        pred = predict_dataset(net, dataset)
    gt = ground_truth(dataset, config.data.depth_scale)
    report = evaluate_predictions(
        pred,
        gt,
        thresholds if thresholds else config.eval.pck_thresholds,
        root=net.variant.graph.root,
        visibility=np.stack([s.visibility for s in dataset.samples]),
        tags=[s.tags for s in dataset.samples],
        pckf_pair=config.eval.pckf_pair,
        pckf_thresholds=config.eval.pckf_thresholds,
    )
    log.info("Evaluated %d samples: mean error %.3f", report.count, report.mean_error)
    return report


def ablate(
    config: ExperimentConfig,
    axis: AblationAxis,
    *,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    out_dir: Path | str = "runs",
    cache: RunCache | None = None,
) -> list[AblationRow]:
    """Train and evaluate every variant of `axis` for each seed; one averaged row per variant."""
    if axis not in ABLATION_AXES:
        raise ConfigError(f"unknown ablation axis {axis!r}; choose from {sorted(ABLATION_AXES)}")
    ensure_dataset(config, "train")
    test_set = ensure_dataset(config, "test")
    rows: list[AblationRow] = []
    for name, overrides in ABLATION_AXES[axis]:
        reports: list[MetricsReport] = []
        for seed in seeds:
            run_cfg = config.replace(overrides).replace({"training": {"init_seed": seed, "shuffle_seed": seed}})
            key = run_key(run_cfg.digest)
            cached = cache.get(key) if cache is not None else None
            if cached is not None:
                log.info("%s=%s seed %d: cached", axis, name, seed)
                reports.append(MetricsReport.from_dict(cached))
                continue
            log.info("%s=%s seed %d: training", axis, name, seed)
            result = train(run_cfg, Path(out_dir) / axis / name / f"seed{seed}")
            report = evaluate(result.checkpoint, test_set)
            if cache is not None:
                cache.set(key, report.to_dict())
            reports.append(report)
        thresholds = sorted(reports[0].pck) if reports else []
        rows.append(
            AblationRow(
                axis=axis,
                variant=name,
                seeds=list(seeds),
                pck={t: float(np.mean([r.pck[t] for r in reports])) for t in thresholds},
                mean_error=float(np.mean([r.mean_error for r in reports])) if reports else 0.0,
                per_seed=reports,
            )
        )
    return rows
