# pose_boost/fmaps.py
"""
Per-joint feature-map dumps.

For each requested joint three graymaps are written: the group of backbone
features before boosting, the gate map (gated networks only) and the boosted
output. Pre/post maps are the channel mean, min-max normalized per image; the
gate is already in ``(0, 1]`` and is written on that absolute scale.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from pose_boost.errors import PoseBoostError, ShapeError
from pose_boost.network import PoseNet
from pose_boost.serialization import Checkpoint, load_checkpoint
from pose_boost.synth import load_image
from pose_boost.tensor import Tensor, get_default_dtype, precision

log = logging.getLogger(__name__)


def normalize_map(values: np.ndarray) -> np.ndarray:
    """Min-max scale to ``[0, 1]``; a constant map becomes 0.5 everywhere."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    if hi - lo <= 0:
        return np.full(values.shape, 0.5)
    return (values - lo) / (hi - lo)


def to_gray(unit: np.ndarray) -> np.ndarray:
    return np.round(np.clip(unit, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path: Path | str, unit: np.ndarray) -> Path:
    """Write a ``[h, w]`` map with values in ``[0, 1]`` as a binary graymap."""
    path = Path(path)
    Image.fromarray(to_gray(unit)).save(path, format="PPM")
    return path


def channel_mean(t: Tensor) -> np.ndarray:
    data = t.data
    if data.ndim == 4:
        data = data[0]
    return data.mean(axis=-1)


def dump_feature_maps(
    checkpoint: Checkpoint | Path | str,
    image: np.ndarray | Path | str,
    joints: Sequence[int],
    out_dir: Path | str,
    *,
    stack: int = -1,
) -> list[Path]:
    """Run one image through the network and write the maps of `joints` (0-based) into `out_dir`."""
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    pixels = image if isinstance(image, np.ndarray) else load_image(image)
    with precision(ckpt.config.get("training", {}).get("precision", "float32")):
        net = PoseNet.from_checkpoint(ckpt)
        bad = [j for j in joints if not 0 <= j < net.joints]
        if bad:
            raise PoseBoostError(f"joint ids {bad} out of range for a {net.joints}-joint skeleton")
        size = net.config.network.input_size
        if pixels.shape != (size, size, 3):
            raise ShapeError("dump_feature_maps", pixels.shape, (size, size, 3), "input image size")
        outputs = net.stack_forward(Tensor(np.asarray(pixels, dtype=get_default_dtype())))
    try:
        boosted = outputs[stack].boost
    except IndexError as exc:
        raise PoseBoostError(f"network has {len(outputs)} stacks, no stack {stack}") from exc

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for j in joints:
        written.append(write_pgm(out / f"joint{j}_pre.pgm", normalize_map(channel_mean(boosted.inputs[j]))))
        gate = boosted.gate(j)
        if gate is not None:
            written.append(write_pgm(out / f"joint{j}_gate.pgm", channel_mean(gate)))
        written.append(write_pgm(out / f"joint{j}_post.pgm", normalize_map(channel_mean(boosted.outputs[j]))))
    log.info("Wrote %d feature maps to %s", len(written), out)
    return written
