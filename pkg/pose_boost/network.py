# pose_boost/network.py
"""
The stacked pose network.

Each sub-network is an hourglass-lite backbone producing the feature stack,
the boosting module, one heatmap head per joint, a 1x1 aggregation summed with
the backbone's first-layer features, and a depth head of four conv+pool stages
and a fully connected layer. Sub-network ``s > 0`` reads the previous
aggregated representation concatenated with the previous feature stack.

Parameters live in one flat table keyed by dotted names, which is also the
checkpoint layout::

    stack0.backbone.stem.W      stack0.lstd.cell.fwd.W_Fi
    stack0.head.unit3.W1        stack0.lstd.ccg.bwd.unit3.W_Hp
    stack0.agg.hm.W             stack0.depth.fc.W
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from pose_boost import ops
from pose_boost.cells import glorot
from pose_boost.config import ExperimentConfig
from pose_boost.errors import CheckpointError, ShapeError
from pose_boost.lstd import BoostResult, LstdParams, boost
from pose_boost.models import LossTerms
from pose_boost.serialization import Checkpoint
from pose_boost.skeleton import GraphVariant
from pose_boost.tensor import Tensor, get_default_dtype

log = logging.getLogger(__name__)

Activation = Callable[[Tensor], Tensor]
NON_PARAMETER_PREFIXES = ("optim.", "train.")
DEPTH_STAGES = 4


@dataclass
class StackOutput:
    heatmaps: Tensor  # [n, h, w, J]
    depths: Tensor  # [n, J]
    aggregated: Tensor  # [n, h, w, A]
    features: Tensor  # [n, h, w, Ctotal]
    skip: Tensor  # [n, h, w, A]
    boost: BoostResult


def _sub(params: Mapping[str, Tensor], prefix: str) -> dict[str, Tensor]:
    n = len(prefix)
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix)}


def _zeros(shape: tuple[int, ...], dtype: object) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


# ---- building blocks -------------------------------------------------------------


def backbone_forward(
    x: Tensor, p: Mapping[str, Tensor], *, pool: int = 1, act: Activation = ops.relu
) -> tuple[Tensor, Tensor]:
    """
    Hourglass-lite encoder-decoder.

    Returns the feature stack and the first-layer features used by the
    aggregation skip. `pool` shrinks the stem output to feature resolution.
    """
    h = act(ops.conv2d(x, p["stem.W"], p["stem.b"]))
    if pool > 1:
        h = ops.avg_pool2d(h, pool)
    skip = act(ops.conv2d(h, p["skip.W"], p["skip.b"]))
    low = act(ops.conv2d(ops.avg_pool2d(skip, 2), p["low.W"], p["low.b"]))
    mid = act(ops.add(ops.conv2d(skip, p["mid.W"], p["mid.b"]), ops.upsample2d(low, 2)))
    return ops.conv2d(mid, p["out.W"], p["out.b"]), skip


def heatmap_head(boosted_j: Tensor, p: Mapping[str, Tensor], act: Activation = ops.relu) -> Tensor:
    hidden = act(ops.conv2d(boosted_j, p["W1"], p["b1"]))
    return ops.conv2d(hidden, p["W2"], p["b2"])


def aggregate_for_depth(
    heatmaps: Tensor, boosted: Tensor, skip: Tensor, p: Mapping[str, Tensor]
) -> Tensor:
    """``heatmaps * W_hm + boosted * W_fb + skip`` with 1x1 kernels and no bias."""
    if heatmaps.shape[:-1] != boosted.shape[:-1] or boosted.shape[:-1] != skip.shape[:-1]:
        raise ShapeError("aggregate_for_depth", heatmaps.shape, boosted.shape, f"skip {skip.shape}")
    projected = ops.add(ops.conv2d(heatmaps, p["hm.W"]), ops.conv2d(boosted, p["fb.W"]))
    return ops.add(projected, skip)


def depth_head(rep: Tensor, p: Mapping[str, Tensor], act: Activation = ops.relu) -> Tensor:
    x = rep if rep.ndim == 4 else ops.reshape(rep, (1, *rep.shape))
    for k in range(DEPTH_STAGES):
        x = ops.avg_pool2d(act(ops.conv2d(x, p[f"conv{k}.W"], p[f"conv{k}.b"])), 2)
    n = x.shape[0]
    flat = ops.reshape(x, (n, x.size // n))
    return ops.add_bias(ops.matmul(flat, p["fc.W"]), p["fc.b"])


def loss(
    outputs: list[StackOutput], gt_heatmaps: Tensor, gt_depth: Tensor, gamma: float
) -> tuple[Tensor, LossTerms]:
    """Mean squared heatmap and depth errors averaged over every stack, weighted by `gamma`."""
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    lh = ops.average([ops.mse(o.heatmaps, gt_heatmaps) for o in outputs])
    ld = ops.average([ops.mse(o.depths, gt_depth) for o in outputs])
    total = ops.add(lh, ops.scale(ld, gamma))
    return total, LossTerms(heatmap=lh.item(), depth=ld.item(), gamma=gamma, total=total.item())


def decode_pose(heatmaps: np.ndarray, depths: np.ndarray) -> np.ndarray:
    """
    Joint ``(x, y, z)`` at heatmap resolution from `heatmaps` ``[h, w, J]``.

    x is the column and y the row of the first maximum in row-major order.
    """
    h, w, joints = heatmaps.shape
    flat = heatmaps.reshape(h * w, joints)
    idx = np.argmax(flat, axis=0)
    rows, cols = np.divmod(idx, w)
    return np.stack([cols.astype(np.float64), rows.astype(np.float64), np.asarray(depths, dtype=np.float64)], axis=1)


def heatmap_to_pixels(xy: np.ndarray, stride: int) -> np.ndarray:
    """Heatmap cell coordinates to the centre of the input-pixel block they cover."""
    return np.asarray(xy, dtype=np.float64) * stride + (stride - 1) / 2.0


def pixels_to_heatmap(xy: np.ndarray, stride: int) -> np.ndarray:
    return (np.asarray(xy, dtype=np.float64) - (stride - 1) / 2.0) / stride


def poses_in_pixels(heatmaps: np.ndarray, depths: np.ndarray, stride: int, depth_scale: float) -> np.ndarray:
    """Decode a batch ``[n, h, w, J]`` into input-pixel poses ``[n, J, 3]``."""
    poses = np.stack([decode_pose(hm, d) for hm, d in zip(heatmaps, depths)])
    poses[..., :2] = heatmap_to_pixels(poses[..., :2], stride)
    poses[..., 2] *= depth_scale
    return poses


# ---- the network ----------------------------------------------------------------


class PoseNet:
    """Parameters plus the forward pass of a configured stacked network."""

    def __init__(
        self,
        config: ExperimentConfig,
        params: dict[str, Tensor],
        variant: GraphVariant | None = None,
    ) -> None:
        self.config = config
        self.params = params
        self.variant = variant if variant is not None else config.graph_variant()
        self.joints = self.variant.graph.num_joints
        net = config.network
        self.total_channels = net.total_channels(self.joints)
        self.act: Activation = ops.activation(net.activation)
        self.lstd = [
            LstdParams.from_named(
                _sub(params, f"stack{s}.lstd."),
                joints=self.joints,
                channels=net.channels_per_joint,
                total_channels=self.total_channels,
                cell_kind=net.cell_kind,
                directions=self.variant.directions,
                omega=net.omega,
                recurrent=net.boosting != "none",
            )
            for s in range(net.stacks)
        ]

    @classmethod
    def init(cls, config: ExperimentConfig, variant: GraphVariant | None = None, seed: int | None = None) -> "PoseNet":
        """Fresh parameters drawn from ``training.init_seed`` (or `seed`)."""
        variant = variant if variant is not None else config.graph_variant()
        net = config.network
        joints = variant.graph.num_joints
        total = net.total_channels(joints)
        k = net.kernel_size
        B, A = net.backbone_channels, net.aggregation_channels
        Hc, D, c = net.head_channels, net.depth_channels, net.channels_per_joint
        dtype = get_default_dtype()
        rng = np.random.default_rng(config.training.init_seed if seed is None else seed)
        params: dict[str, Tensor] = {}

        def conv(name: str, cin: int, cout: int, size: int = k, bias: bool = True) -> None:
            params[f"{name}.W"] = glorot(rng, (size, size, cin, cout), dtype)
            if bias:
                params[f"{name}.b"] = _zeros((cout,), dtype)

        pooled = net.feature_size // 2**DEPTH_STAGES
        for s in range(net.stacks):
            pre = f"stack{s}"
            stem_in = 3 if s == 0 else A + total
            conv(f"{pre}.backbone.stem", stem_in, B)
            conv(f"{pre}.backbone.skip", B, A)
            conv(f"{pre}.backbone.low", A, B)
            conv(f"{pre}.backbone.mid", A, B)
            conv(f"{pre}.backbone.out", B, total)
            lstd = LstdParams.init(
                rng,
                joints=joints,
                channels=c,
                total_channels=total,
                cell_kind=net.cell_kind,
                directions=variant.directions,
                kernel_size=k,
                omega=net.omega,
                recurrent=net.boosting != "none",
                dtype=dtype,
            )
            params.update({f"{pre}.lstd.{name}": t for name, t in lstd.named().items()})
            for j in range(joints):
                params[f"{pre}.head.unit{j}.W1"] = glorot(rng, (k, k, c, Hc), dtype)
                params[f"{pre}.head.unit{j}.b1"] = _zeros((Hc,), dtype)
                params[f"{pre}.head.unit{j}.W2"] = glorot(rng, (1, 1, Hc, 1), dtype)
                params[f"{pre}.head.unit{j}.b2"] = _zeros((1,), dtype)
            conv(f"{pre}.agg.hm", joints, A, size=1, bias=False)
            conv(f"{pre}.agg.fb", joints * c, A, size=1, bias=False)
            width = A
            for stage in range(DEPTH_STAGES):
                conv(f"{pre}.depth.conv{stage}", width, D)
                width = D
            params[f"{pre}.depth.fc.W"] = glorot(rng, (pooled * pooled * D, joints), dtype)
            params[f"{pre}.depth.fc.b"] = _zeros((joints,), dtype)

        log.debug("Initialized %d parameter tensors", len(params))
        return cls(config, params, variant)

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint, variant: GraphVariant | None = None) -> "PoseNet":
        config = ExperimentConfig.from_dict(ckpt.config)
        stored = {k: v for k, v in ckpt.tensors.items() if not k.startswith(NON_PARAMETER_PREFIXES)}
        reference = cls.init(config, variant)
        missing = sorted(set(reference.params) - set(stored))
        unexpected = sorted(set(stored) - set(reference.params))
        if missing or unexpected:
            raise CheckpointError(f"parameter names differ: missing {missing[:5]}, unexpected {unexpected[:5]}")
        for name, ref in reference.params.items():
            if stored[name].shape != ref.shape:
                raise CheckpointError(f"{name}: stored shape {stored[name].shape}, expected {ref.shape}")
        params = {k: Tensor(v.copy(), requires_grad=True) for k, v in stored.items()}
        return cls(config, params, reference.variant)

    @property
    def stride(self) -> int:
        return self.config.network.stride

    def parameters(self) -> list[Tensor]:
        return [self.params[k] for k in sorted(self.params)]

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def to_checkpoint(self, extra: Mapping[str, np.ndarray] | None = None) -> Checkpoint:
        tensors = self.state()
        if extra:
            tensors.update(extra)
        return Checkpoint(config=self.config.to_dict(), tensors=tensors)

    def stack_forward(self, images: Tensor) -> list[StackOutput]:
        net = self.config.network
        if images.ndim == 3:
            images = ops.reshape(images, (1, *images.shape))
        if images.ndim != 4 or images.shape[1:] != (net.input_size, net.input_size, 3):
            raise ShapeError(
                "stack_forward", images.shape, (net.input_size, net.input_size, 3), "input image size"
            )
        outputs: list[StackOutput] = []
        x = images
        for s in range(net.stacks):
            pre = f"stack{s}"
            F, skip = backbone_forward(
                x, _sub(self.params, f"{pre}.backbone."), pool=self.stride if s == 0 else 1, act=self.act
            )
            boosted = boost(F, self.variant, self.lstd[s], net.boosting, net.cell)
            heads = [
                heatmap_head(boosted.outputs[j], _sub(self.params, f"{pre}.head.unit{j}."), self.act)
                for j in range(self.joints)
            ]
            heatmaps = ops.concat(heads, axis=-1)
            rep = aggregate_for_depth(heatmaps, boosted.stack, skip, _sub(self.params, f"{pre}.agg."))
            depths = depth_head(rep, _sub(self.params, f"{pre}.depth."), self.act)
            outputs.append(StackOutput(heatmaps, depths, rep, F, skip, boosted))
            x = ops.concat([rep, F], axis=-1)
        return outputs

    __call__ = stack_forward

    def loss(self, outputs: list[StackOutput], gt_heatmaps: Tensor, gt_depth: Tensor) -> tuple[Tensor, LossTerms]:
        return loss(outputs, gt_heatmaps, gt_depth, self.config.network.gamma)

    def predict(self, images: np.ndarray) -> np.ndarray:
        """Input-pixel poses ``[n, J, 3]`` decoded from the last stack."""
        out = self.stack_forward(Tensor(np.asarray(images, dtype=get_default_dtype())))[-1]
        return poses_in_pixels(out.heatmaps.data, out.depths.data, self.stride, self.config.data.depth_scale)
