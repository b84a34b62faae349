# pose_boost/lstd.py
"""
Feature boosting over a joint graph.

The feature stack is divided into one channel group per joint (after a
learned 1x1 projection when its width is not ``joints * c``), each group is
rewritten by the graph recurrence, and the boosted groups are concatenated
back in joint order.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence, get_args

import numpy as np

from pose_boost import ops
from pose_boost.cells import CELL_KINDS, DirectionParams, glorot, run_bidirectional
from pose_boost.errors import CheckpointError, ConfigError, PoseBoostError, ShapeError
from pose_boost.models import Boosting
from pose_boost.skeleton import Direction, GraphVariant
from pose_boost.tensor import Tensor

log = logging.getLogger(__name__)

# "none" and "passthrough" both return the groups unchanged
BoostMode = Literal[Boosting, "passthrough"]
BOOST_MODES: tuple[str, ...] = get_args(BoostMode)


def needs_projection(total_channels: int, joints: int, c: int) -> bool:
    return total_channels != joints * c


def split_channels(F: Tensor, joints: int, c: int, projection: Tensor | None = None) -> list[Tensor]:
    """Per-joint channel groups of `F`, projected to ``joints * c`` channels first if needed."""
    if joints * c == 0:
        raise ValueError(f"cannot split into {joints} groups of {c} channels")
    if needs_projection(F.shape[-1], joints, c):
        if projection is None:
            raise ShapeError(
                "split_channels", F.shape, (joints, c), "channel count differs from joints * c and no projection given"
            )
        F = ops.conv2d(F, projection)
    elif projection is not None:
        raise ShapeError("split_channels", F.shape, projection.shape, "projection given but widths already agree")
    return [ops.slice_channels(F, j * c, (j + 1) * c) for j in range(joints)]


def reassemble(groups: Sequence[Tensor]) -> Tensor:
    return ops.concat(list(groups), axis=-1)


@dataclass
class LstdParams:
    joints: int
    channels: int
    forward: DirectionParams | None
    backward: DirectionParams | None = None
    projection: Tensor | None = None

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        *,
        joints: int,
        channels: int,
        total_channels: int,
        cell_kind: str,
        directions: Sequence[Direction] = ("forward", "backward"),
        kernel_size: int = 3,
        omega: float = math.sqrt(2.0),
        recurrent: bool = True,
        dtype: object = None,
    ) -> "LstdParams":
        projection = None
        if needs_projection(total_channels, joints, channels):
            log.debug("Inserting 1x1 projection %d -> %d channels", total_channels, joints * channels)
            projection = glorot(rng, (1, 1, total_channels, joints * channels), dtype)
        if not recurrent:
            return cls(joints, channels, None, None, projection)

        def make() -> DirectionParams:
            return DirectionParams.init(
                rng, cell_kind, joints, channels, total_channels, kernel_size, omega, dtype
            )

        fwd = make()
        bwd = make() if "backward" in directions else None
        return cls(joints, channels, fwd, bwd, projection)

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.projection is not None:
            out["proj.W"] = self.projection
        if self.forward is not None:
            out.update(self.forward.named("forward"))
        if self.backward is not None:
            out.update(self.backward.named("backward"))
        return out

    @classmethod
    def from_named(
        cls,
        tensors: Mapping[str, Tensor],
        *,
        joints: int,
        channels: int,
        total_channels: int,
        cell_kind: str,
        directions: Sequence[Direction] = ("forward", "backward"),
        omega: float = math.sqrt(2.0),
        recurrent: bool = True,
    ) -> "LstdParams":
        projection = None
        if needs_projection(total_channels, joints, channels):
            if "proj.W" not in tensors:
                raise CheckpointError("missing tensor 'proj.W'")
            projection = tensors["proj.W"]
        if not recurrent:
            return cls(joints, channels, None, None, projection)
        fwd = DirectionParams.from_named(tensors, "forward", cell_kind, joints, omega)
        bwd = (
            DirectionParams.from_named(tensors, "backward", cell_kind, joints, omega)
            if "backward" in directions
            else None
        )
        return cls(joints, channels, fwd, bwd, projection)


@dataclass
class BoostResult:
    inputs: list[Tensor]
    outputs: list[Tensor]
    stack: Tensor
    gates_forward: list[Tensor | None] = field(default_factory=list)
    gates_backward: list[Tensor | None] = field(default_factory=list)

    def gate(self, joint: int) -> Tensor | None:
        """Mean of the directions' gate maps at `joint`, if the run was gated."""
        found = [
            g[joint] for g in (self.gates_forward, self.gates_backward) if g and g[joint] is not None
        ]
        if not found:
            return None
        return ops.average(found)  # type: ignore[arg-type]


def boost(
    F: Tensor,
    graph: GraphVariant,
    params: LstdParams,
    mode: BoostMode = "fb",
    cell_kind: str = "convlstm",
) -> BoostResult:
    """
    Boost per-joint feature groups of `F`.

    ``fb`` runs `cell_kind` (the plain ConvLSTM update by default), ``fb_plus``
    runs the gated ConvLSTM, ``none`` (or ``passthrough``) returns the groups unchanged.
    Each joint's output is the sum of the directions listed by `graph`.
    """
    if mode not in BOOST_MODES:
        raise ConfigError(f"unknown boosting mode {mode!r}; choose from {BOOST_MODES}")
    if graph.graph.num_joints != params.joints:
        raise PoseBoostError(
            f"graph has {graph.graph.num_joints} joints, boosting parameters cover {params.joints}"
        )
    inputs = split_channels(F, params.joints, params.channels, params.projection)
    if mode in ("none", "passthrough"):
        return BoostResult(inputs=inputs, outputs=list(inputs), stack=reassemble(inputs))

    if mode == "fb_plus":
        if cell_kind not in ("convlstm", "convlstm_ccg"):
            raise ConfigError(f"gated boosting needs a ConvLSTM, got {cell_kind!r}")
        kind = "convlstm_ccg"
    else:
        if cell_kind not in CELL_KINDS or cell_kind == "convlstm_ccg":
            raise ConfigError(f"plain boosting needs convlstm, convgru or convrnn, got {cell_kind!r}")
        kind = cell_kind
    if params.forward is None:
        raise PoseBoostError("boosting parameters carry no recurrent weights")

    result = run_bidirectional(
        graph.graph,
        inputs,
        params.forward,
        params.backward,
        kind,
        features=F,
        directions=graph.directions,
    )
    return BoostResult(
        inputs=inputs,
        outputs=result.outputs,
        stack=reassemble(result.outputs),
        gates_forward=result.forward.gates,
        gates_backward=result.backward.gates if result.backward is not None else [],
    )
