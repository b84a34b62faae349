# pose_boost/synth.py
"""
Synthetic articulated-pose data.

Poses come from forward kinematics over the skeleton's physical tree, are
projected orthographically and fitted to the frame, then drawn as shaded
anti-aliased stick figures. A dataset directory holds::

    meta.json            shapes, graph, seeds
    samples/000000.ppm   binary RGB pixmaps
    annotations.jsonl    id, joints2d, joints_hm, depth, visibility, tags
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence, Union

import numpy as np
from PIL import Image
from scipy.ndimage import affine_transform

from pose_boost.config import AugmentConfig, ExperimentConfig
from pose_boost.errors import SynthError
from pose_boost.models import PoseSample
from pose_boost.network import pixels_to_heatmap
from pose_boost.skeleton import SkeletonGraph

log = logging.getLogger(__name__)

Seed = Union[int, Sequence[int], np.random.Generator]
DATASET_FORMAT = "pose_boost-dataset/1"
SPLIT_CODES = {"train": 0, "test": 1}

# Per-limb RGB shades, cycled over edge index.
_PALETTE = np.array(
    [
        (0.95, 0.35, 0.30),
        (0.30, 0.55, 0.95),
        (0.40, 0.85, 0.40),
        (0.95, 0.80, 0.30),
        (0.80, 0.40, 0.90),
        (0.35, 0.90, 0.90),
        (0.95, 0.55, 0.75),
        (0.70, 0.70, 0.45),
    ]
)
_JOINT_SHADE = np.array((1.0, 1.0, 1.0))
_FLAT_BACKGROUND = 0.1


# ---- rigs -----------------------------------------------------------------------


@dataclass(frozen=True)
class Rig:
    """
    Kinematic description: for each joint its parent, the rest direction and
    length of the bone into it, and half-ranges (radians) of the yaw (about the
    vertical axis) and pitch (about the horizontal axis) perturbing that bone.
    """

    parents: tuple[int, ...]
    order: tuple[int, ...]
    rest: tuple[tuple[float, float, float], ...]
    lengths: tuple[float, ...]
    yaw: tuple[float, ...]
    pitch: tuple[float, ...]
    global_yaw: float = 0.8

    def frozen(self) -> "Rig":
        """The same rig with every angle range collapsed to zero."""
        n = len(self.parents)
        return replace(self, yaw=(0.0,) * n, pitch=(0.0,) * n, global_yaw=0.0)

    def validate(self) -> None:
        for j, parent in enumerate(self.parents):
            if parent < 0:
                continue
            if not self.lengths[j] > 0:
                raise SynthError(f"bone into joint {j} has non-positive length {self.lengths[j]}")
            if not any(self.rest[j]):
                raise SynthError(f"bone into joint {j} has a zero rest direction")


# (parent, rest direction, length, yaw range, pitch range); x right, y down, z toward the viewer.
_BODY16 = {
    1: (0, (0, -1, 0), 10.0, 0.2, 0.3),
    2: (1, (0, -1, 0), 10.0, 0.2, 0.2),
    3: (2, (0, -1, 0), 6.0, 0.4, 0.4),
    4: (2, (1, 0, 0), 7.0, 0.1, 0.1),
    5: (4, (0, 1, 0), 10.0, 1.2, 1.2),
    6: (5, (0, 1, 0), 9.0, 1.2, 1.2),
    7: (2, (-1, 0, 0), 7.0, 0.1, 0.1),
    8: (7, (0, 1, 0), 10.0, 1.2, 1.2),
    9: (8, (0, 1, 0), 9.0, 1.2, 1.2),
    10: (0, (1, 0, 0), 5.0, 0.1, 0.1),
    11: (10, (0, 1, 0), 12.0, 0.4, 0.8),
    12: (11, (0, 1, 0), 12.0, 0.3, 0.8),
    13: (0, (-1, 0, 0), 5.0, 0.1, 0.1),
    14: (13, (0, 1, 0), 12.0, 0.4, 0.8),
    15: (14, (0, 1, 0), 12.0, 0.3, 0.8),
}


def _hand21() -> dict[int, tuple[int, tuple[float, float, float], float, float, float]]:
    spread = (-0.9, -0.3, 0.0, 0.3, 0.6)
    bases = (6.0, 12.0, 12.0, 11.0, 10.0)
    segments = ((5.0, 4.0, 3.0), (6.0, 4.0, 3.0), (6.5, 4.5, 3.0), (6.0, 4.0, 3.0), (5.0, 3.5, 2.5))
    table = {}
    for f, angle in enumerate(spread):
        direction = (math.sin(angle), -math.cos(angle), 0.0)
        first = 1 + 4 * f
        table[first] = (0, direction, bases[f], 0.1, 0.2)
        for seg in range(3):
            table[first + seg + 1] = (first + seg, direction, segments[f][seg], 0.1, 0.7)
    return table


_SHIPPED_RIGS = {"body16": _BODY16, "hand21": _hand21()}


def _physical_tree(skeleton: SkeletonGraph) -> tuple[list[int], list[int]]:
    n = skeleton.num_joints
    adj: list[list[int]] = [[] for _ in range(n)]
    for e in skeleton.edges:
        if e.kind == "physical":
            adj[e.src].append(e.dst)
            adj[e.dst].append(e.src)
    parents = [-1] * n
    order = [skeleton.root]
    seen = {skeleton.root}
    i = 0
    while i < len(order):
        node = order[i]
        i += 1
        for nxt in sorted(adj[node]):
            if nxt not in seen:
                seen.add(nxt)
                parents[nxt] = node
                order.append(nxt)
    if len(order) != n:
        missing = sorted(set(range(n)) - seen)
        raise SynthError(f"joints {missing} are not connected to the root by physical links")
    return parents, order


def rig_for(skeleton: SkeletonGraph) -> Rig:
    """The shipped rig for body16/hand21, otherwise evenly fanned unit bones."""
    n = skeleton.num_joints
    if n == 0:
        return Rig((), (), (), (), (), (), 0.0)
    parents, order = _physical_tree(skeleton)
    table = _SHIPPED_RIGS.get(skeleton.name)
    rest: list[tuple[float, float, float]] = [(0.0, 0.0, 0.0)] * n
    lengths = [0.0] * n
    yaw = [0.0] * n
    pitch = [0.0] * n
    for j in range(n):
        if parents[j] < 0:
            continue
        if table is not None and j in table and table[j][0] == parents[j]:
            _, d, length, y, p = table[j]
            rest[j] = tuple(float(v) for v in d)  # type: ignore[assignment]
            lengths[j], yaw[j], pitch[j] = length, y, p
        else:
            theta = 2 * math.pi * j / n
            rest[j] = (math.cos(theta), math.sin(theta), 0.0)
            lengths[j], yaw[j], pitch[j] = 10.0, 0.5, 0.5
    rig = Rig(tuple(parents), tuple(order), tuple(rest), tuple(lengths), tuple(yaw), tuple(pitch))
    rig.validate()
    return rig


# ---- poses ----------------------------------------------------------------------


def _rng(seed: Seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _rotation(yaw: float, pitch: float) -> np.ndarray:
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    return ry @ rx


def draw_pose(seed: Seed, skeleton: SkeletonGraph, rig: Rig | None = None) -> tuple[np.ndarray, float]:
    """A 3D pose ``[J, 3]`` and the global yaw it was turned by."""
    rig = rig if rig is not None else rig_for(skeleton)
    rig.validate()
    rng = _rng(seed)
    n = skeleton.num_joints
    pose = np.zeros((n, 3))
    if n == 0:
        return pose, 0.0
    global_yaw = float(rng.uniform(-rig.global_yaw, rig.global_yaw))
    for j in rig.order[1:]:
        yaw = rng.uniform(-rig.yaw[j], rig.yaw[j])
        pitch = rng.uniform(-rig.pitch[j], rig.pitch[j])
        d = np.asarray(rig.rest[j], dtype=np.float64)
        d = _rotation(yaw, pitch) @ (d / np.linalg.norm(d))
        pose[j] = pose[rig.parents[j]] + rig.lengths[j] * d
    return pose @ _rotation(global_yaw, 0.0).T, global_yaw


def sample_pose(seed: Seed, skeleton: SkeletonGraph, rig: Rig | None = None) -> np.ndarray:
    """A 3D pose ``[J, 3]`` with the root at the origin; every bone keeps its rig length."""
    return draw_pose(seed, skeleton, rig)[0]


def normalize_pose(
    pose3d: np.ndarray, size: int, depth_scale: float, *, root: int = 0, margin: float = 0.1
) -> tuple[np.ndarray, np.ndarray]:
    """
    Fit the orthographic projection into a ``size`` square frame.

    Returns pixel ``(x, y)`` per joint and root-relative depth in the same
    pixel scale divided by `depth_scale`.
    """
    if depth_scale <= 0:
        raise SynthError(f"depth_scale must be positive, got {depth_scale}")
    if len(pose3d) == 0:
        return np.zeros((0, 2)), np.zeros(0)
    xy = pose3d[:, :2]
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    extent = max(float((hi - lo).max()), 1e-9)
    s = (1.0 - 2.0 * margin) * (size - 1) / extent
    joints2d = (xy - (lo + hi) / 2.0) * s + (size - 1) / 2.0
    depth = (pose3d[:, 2] - pose3d[root, 2]) * s / depth_scale
    return joints2d, depth


# ---- rendering ------------------------------------------------------------------


def _background(size: int, kind: str, rng: np.random.Generator | None) -> np.ndarray:
    if kind == "flat":
        return np.full((size, size, 3), _FLAT_BACKGROUND)
    if kind == "noise":
        return (rng or np.random.default_rng(0)).uniform(0.0, 0.25, size=(size, size, 3))
    raise SynthError(f"unknown background {kind!r}")


def _segment_distance(xs: np.ndarray, ys: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    length_sq = float(d @ d)
    if length_sq == 0.0:
        t = np.zeros_like(xs)
    else:
        t = np.clip(((xs - a[0]) * d[0] + (ys - a[1]) * d[1]) / length_sq, 0.0, 1.0)
    return np.hypot(xs - (a[0] + t * d[0]), ys - (a[1] + t * d[1]))


def _blend(img: np.ndarray, coverage: np.ndarray, shade: np.ndarray) -> np.ndarray:
    cov = coverage[..., None]
    return img * (1.0 - cov) + shade * cov


def render(
    joints2d: np.ndarray,
    edges: Sequence[tuple[int, int]],
    size: int,
    *,
    depth: np.ndarray | None = None,
    background: str = "flat",
    rng: np.random.Generator | None = None,
    thickness: float = 1.5,
    joint_radius: float = 1.2,
) -> np.ndarray:
    """
    Draw bones as anti-aliased segments, farthest first, then joint discs.

    Pixel centres sit at integer coordinates; coverage falls off linearly over
    one pixel at the stroke edge. Returns ``[size, size, 3]`` in [0, 1].
    """
    img = _background(size, background, rng)
    if len(joints2d) == 0:
        return img
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    pts = np.asarray(joints2d, dtype=np.float64)
    order = list(range(len(edges)))
    if depth is not None:
        order.sort(key=lambda i: (depth[edges[i][0]] + depth[edges[i][1]], i))
    for i in order:
        a, b = edges[i]
        dist = _segment_distance(xs, ys, pts[a], pts[b])
        img = _blend(img, np.clip(thickness / 2.0 + 0.5 - dist, 0.0, 1.0), _PALETTE[i % len(_PALETTE)])
    for p in pts:
        dist = np.hypot(xs - p[0], ys - p[1])
        img = _blend(img, np.clip(joint_radius + 0.5 - dist, 0.0, 1.0), _JOINT_SHADE)
    return np.clip(img, 0.0, 1.0)


def quantize(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)


# ---- heatmaps -------------------------------------------------------------------


def make_heatmap_gt(
    joints_hm: np.ndarray,
    sigma: float,
    h: int,
    w: int,
    visibility: np.ndarray | None = None,
) -> np.ndarray:
    """
    Gaussian target maps ``[h, w, J]`` with peak 1 at each joint's nearest pixel.

    Invisible or out-of-frame joints get an all-zero map.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    joints = len(joints_hm)
    out = np.zeros((h, w, joints))
    rows = np.arange(h, dtype=np.float64)[:, None]
    cols = np.arange(w, dtype=np.float64)[None, :]
    for j in range(joints):
        if visibility is not None and not visibility[j]:
            continue
        cx = math.floor(joints_hm[j][0] + 0.5)
        cy = math.floor(joints_hm[j][1] + 0.5)
        if not (0 <= cx < w and 0 <= cy < h):
            continue
        out[..., j] = np.exp(-((cols - cx) ** 2 + (rows - cy) ** 2) / (2.0 * sigma * sigma))
    return out


# ---- augmentation ---------------------------------------------------------------


@dataclass(frozen=True)
class AugmentParams:
    shift: tuple[float, float] = (0.0, 0.0)  # (x, y) pixels
    scale: float = 1.0
    rotation: float = 0.0  # degrees

    def is_identity(self) -> bool:
        return self.shift == (0.0, 0.0) and self.scale == 1.0 and self.rotation == 0.0


def draw_augment(rng: np.random.Generator, cfg: AugmentConfig) -> AugmentParams:
    tx, ty = rng.uniform(-cfg.max_shift, cfg.max_shift, size=2)
    return AugmentParams(
        shift=(float(tx), float(ty)),
        scale=float(rng.uniform(cfg.scale_min, cfg.scale_max)),
        rotation=float(rng.uniform(-cfg.max_rotation, cfg.max_rotation)),
    )


def augment(sample: PoseSample, params: AugmentParams, stride: int = 1) -> PoseSample:
    """
    Apply one similarity transform about the image centre to the image and joints.

    Depth is multiplied by the same scale; joints leaving the frame become invisible.
    """
    if params.is_identity():
        return replace(
            sample,
            image=sample.image.copy(),
            joints2d=sample.joints2d.copy(),
            joints_hm=sample.joints_hm.copy(),
            depth=sample.depth.copy(),
            visibility=sample.visibility.copy(),
            tags=list(sample.tags),
        )
    size = sample.image.shape[0]
    c = np.full(2, (size - 1) / 2.0)
    t = np.asarray(params.shift, dtype=np.float64)
    theta = math.radians(params.rotation)
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    forward = params.scale * rot  # acts on (x, y)
    inverse = rot.T / params.scale

    # scipy indexes (row, col) = (y, x): swap both axes of the xy-matrix.
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    matrix = swap @ inverse @ swap
    offset = swap @ (c - inverse @ (c + t))
    image = np.stack(
        [
            affine_transform(sample.image[..., ch], matrix, offset=offset, order=1, mode="constant", cval=0.0)
            for ch in range(sample.image.shape[-1])
        ],
        axis=-1,
    )
    joints2d = (sample.joints2d - c) @ forward.T + c + t
    inside = np.all((joints2d >= 0) & (joints2d <= size - 1), axis=1)
    return replace(
        sample,
        image=np.clip(image, 0.0, 1.0),
        joints2d=joints2d,
        joints_hm=pixels_to_heatmap(joints2d, stride),
        depth=sample.depth * params.scale,
        visibility=sample.visibility & inside,
        tags=list(sample.tags),
    )


def random_augment(sample: PoseSample, rng: np.random.Generator, cfg: AugmentConfig, stride: int = 1) -> PoseSample:
    return augment(sample, draw_augment(rng, cfg), stride)


# ---- datasets -------------------------------------------------------------------


@dataclass
class Dataset:
    meta: dict[str, Any]
    samples: list[PoseSample] = field(default_factory=list)
    root: Path | None = None

    @property
    def joints(self) -> int:
        return int(self.meta["joints"])

    def __len__(self) -> int:
        return len(self.samples)


def _facing_tag(global_yaw: float, limit: float) -> str:
    if limit > 0 and global_yaw < -limit / 3:
        return "facing_left"
    if limit > 0 and global_yaw > limit / 3:
        return "facing_right"
    return "facing_front"


def generate_sample(index: int, config: ExperimentConfig, skeleton: SkeletonGraph, rig: Rig, split: str = "train") -> PoseSample:
    """Sample `index` of a split; a pure function of (data seed, split, index, config)."""
    rng = np.random.default_rng([config.data.seed, SPLIT_CODES[split], index])
    size = config.network.input_size
    pose, global_yaw = draw_pose(rng, skeleton, rig)
    joints2d, depth = normalize_pose(
        pose, size, config.data.depth_scale, root=skeleton.root, margin=config.data.margin
    )
    edges = [(e.src, e.dst) for e in skeleton.edges if e.kind == "physical"]
    image = render(joints2d, edges, size, depth=depth, background=config.data.background, rng=rng)
    return PoseSample(
        id=f"{index:06d}",
        image=quantize(image).astype(np.float64) / 255.0,
        joints2d=joints2d,
        joints_hm=pixels_to_heatmap(joints2d, config.network.stride),
        depth=depth,
        visibility=np.ones(skeleton.num_joints, dtype=bool),
        tags=[_facing_tag(global_yaw, rig.global_yaw)],
    )


def generate_samples(config: ExperimentConfig, split: str = "train", count: int | None = None) -> list[PoseSample]:
    if split not in SPLIT_CODES:
        raise SynthError(f"unknown split {split!r}")
    skeleton = config.skeleton()
    rig = rig_for(skeleton)
    n = count if count is not None else (config.data.num_train if split == "train" else config.data.num_test)
    if config.data.workers > 1:
        with ThreadPoolExecutor(max_workers=config.data.workers) as pool:
            return list(pool.map(lambda i: generate_sample(i, config, skeleton, rig, split), range(n)))
    return [generate_sample(i, config, skeleton, rig, split) for i in range(n)]


def dataset_meta(config: ExperimentConfig, split: str, count: int) -> dict[str, Any]:
    skeleton = config.skeleton()
    return {
        "format": DATASET_FORMAT,
        "split": split,
        "count": count,
        "seed": config.data.seed,
        "graph": config.graph.name,
        "joints": skeleton.num_joints,
        "joint_names": list(skeleton.names),
        "root": skeleton.root,
        "input_size": config.network.input_size,
        "feature_size": config.network.feature_size,
        "stride": config.network.stride,
        "depth_scale": config.data.depth_scale,
        "background": config.data.background,
    }


def write_dataset(path: Path | str, samples: Sequence[PoseSample], meta: dict[str, Any]) -> Path:
    root = Path(path)
    (root / "samples").mkdir(parents=True, exist_ok=True)
    (root / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with (root / "annotations.jsonl").open("w", encoding="utf-8") as f:
        for sample in samples:
            Image.fromarray(quantize(sample.image)).save(root / "samples" / f"{sample.id}.ppm", format="PPM")
            f.write(json.dumps(sample.annotation()) + "\n")
    log.info("Wrote %d samples to %s", len(samples), root)
    return root


def load_image(path: Path | str) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).astype(np.float64) / 255.0


def read_dataset(path: Path | str) -> Dataset:
    root = Path(path)
    meta_path = root / "meta.json"
    if not meta_path.exists():
        raise SynthError(f"not a dataset directory (no meta.json): {root}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    samples: list[PoseSample] = []
    with (root / "annotations.jsonl").open("r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            samples.append(
                PoseSample(
                    id=rec["id"],
                    image=load_image(root / "samples" / f"{rec['id']}.ppm"),
                    joints2d=np.asarray(rec["joints2d"], dtype=np.float64).reshape(-1, 2),
                    joints_hm=np.asarray(rec["joints_hm"], dtype=np.float64).reshape(-1, 2),
                    depth=np.asarray(rec["depth"], dtype=np.float64),
                    visibility=np.asarray(rec["visibility"], dtype=bool),
                    tags=list(rec.get("tags", [])),
                )
            )
    if len(samples) != meta.get("count", len(samples)):
        raise SynthError(f"{root}: meta.json lists {meta['count']} samples, found {len(samples)}")
    return Dataset(meta=meta, samples=samples, root=root)


def generate_dataset(config: ExperimentConfig, out_dir: Path | str, split: str = "train", count: int | None = None) -> Path:
    samples = generate_samples(config, split, count)
    log.info("Generated %d %s samples (seed %d)", len(samples), split, config.data.seed)
    return write_dataset(out_dir, samples, dataset_meta(config, split, len(samples)))


def ensure_dataset(config: ExperimentConfig, split: str = "train") -> Dataset:
    """Read the configured split, generating it first when missing or drawn from another seed."""
    directory = Path(config.data.train_dir if split == "train" else config.data.test_dir)
    meta_path = directory / "meta.json"
    reason = None
    if not meta_path.exists():
        reason = "missing"
    else:
        stored = json.loads(meta_path.read_text(encoding="utf-8")).get("seed")
        if stored is not None and stored != config.data.seed:
            reason = f"drawn with seed {stored}, config wants {config.data.seed}"
    if reason is not None:
        if not config.data.generate_missing:
            raise SynthError(f"dataset at {directory} is {reason}")
        log.info("%s dataset at %s is %s; generating one", split, directory, reason)
        generate_dataset(config, directory, split)
    return read_dataset(directory)
