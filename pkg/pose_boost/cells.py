# pose_boost/cells.py
"""
Recurrent units over a joint graph.

A unit's context is the elementwise mean of its predecessors' states. The
ConvLSTM gate kernels are shared by every unit of one direction; the
consistency-gate prediction weights are per unit. Root units (no
predecessors) see a zero context; the context convolutions are skipped for
them since they contribute nothing.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Literal, Mapping, Sequence, Union

import numpy as np

from pose_boost import ops
from pose_boost.errors import CheckpointError, PoseBoostError, ShapeError
from pose_boost.skeleton import Direction, PassOrder, SkeletonGraph, pass_order
from pose_boost.tensor import Tensor, get_default_dtype

log = logging.getLogger(__name__)

CellKind = Literal["convlstm", "convlstm_ccg", "convgru", "convrnn"]
CELL_KINDS: tuple[str, ...] = ("convlstm", "convlstm_ccg", "convgru", "convrnn")
DIRECTION_TAGS: dict[str, str] = {"forward": "fwd", "backward": "bwd"}


def glorot(rng: np.random.Generator, shape: Sequence[int], dtype: object = None) -> Tensor:
    """Uniform in ±sqrt(6 / (fan_in + fan_out)) for a conv or dense kernel."""
    shape = tuple(shape)
    if len(shape) == 4:
        kh, kw, cin, cout = shape
        fan_in, fan_out = kh * kw * cin, kh * kw * cout
    else:
        fan_in, fan_out = shape[0], shape[-1]
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    data = rng.uniform(-limit, limit, size=shape).astype(_dt(dtype))
    return Tensor(data, requires_grad=True)


def _dt(dtype: object) -> np.dtype:
    return np.dtype(dtype) if dtype is not None else get_default_dtype()


def _const(shape: Sequence[int], value: float, dtype: object = None) -> Tensor:
    return Tensor(np.full(tuple(shape), value, dtype=_dt(dtype)), requires_grad=True)


class _Named:
    """Mixin: the dataclass fields of a weight set, by name."""

    def named(self) -> dict[str, Tensor]:
        return {f.name: getattr(self, f.name) for f in fields(self)}  # type: ignore[arg-type]


@dataclass
class CellWeights(_Named):
    """ConvLSTM kernels (input and context terms per gate) and per-channel biases."""

    W_Fi: Tensor
    W_Hi: Tensor
    W_Ff: Tensor
    W_Hf: Tensor
    W_Fc: Tensor
    W_Hc: Tensor
    W_Fo: Tensor
    W_Ho: Tensor
    b_i: Tensor
    b_f: Tensor
    b_c: Tensor
    b_o: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, c: int, k: int = 3, dtype: object = None) -> "CellWeights":
        kernels = {name: glorot(rng, (k, k, c, c), dtype) for name in _LSTM_KERNELS}
        return cls(
            **kernels,
            b_i=_const((c,), 0.0, dtype),
            b_f=_const((c,), 1.0, dtype),
            b_c=_const((c,), 0.0, dtype),
            b_o=_const((c,), 0.0, dtype),
        )

    @classmethod
    def zeros(cls, c: int, k: int = 3, dtype: object = None) -> "CellWeights":
        return cls(
            **{name: _const((k, k, c, c), 0.0, dtype) for name in _LSTM_KERNELS},
            **{name: _const((c,), 0.0, dtype) for name in ("b_i", "b_f", "b_c", "b_o")},
        )

    @property
    def channels(self) -> int:
        return self.W_Fi.shape[3]

    def stacked(self) -> "StackedGates":
        """All four gates fused along the output channels, in i, f, c, o order."""
        return StackedGates(
            ops.concat([self.W_Fi, self.W_Ff, self.W_Fc, self.W_Fo], axis=-1),
            ops.concat([self.W_Hi, self.W_Hf, self.W_Hc, self.W_Ho], axis=-1),
            ops.concat([self.b_i, self.b_f, self.b_c, self.b_o], axis=-1),
        )


_LSTM_KERNELS = ("W_Fi", "W_Hi", "W_Ff", "W_Hf", "W_Fc", "W_Hc", "W_Fo", "W_Ho")


@dataclass
class StackedGates:
    W_F: Tensor
    W_H: Tensor
    b: Tensor


@dataclass
class GruWeights(_Named):
    W_Fz: Tensor
    W_Hz: Tensor
    W_Fr: Tensor
    W_Hr: Tensor
    W_Fh: Tensor
    W_Hh: Tensor
    b_z: Tensor
    b_r: Tensor
    b_h: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, c: int, k: int = 3, dtype: object = None) -> "GruWeights":
        kernels = {n: glorot(rng, (k, k, c, c), dtype) for n in ("W_Fz", "W_Hz", "W_Fr", "W_Hr", "W_Fh", "W_Hh")}
        return cls(**kernels, **{n: _const((c,), 0.0, dtype) for n in ("b_z", "b_r", "b_h")})

    @property
    def channels(self) -> int:
        return self.W_Fz.shape[3]


@dataclass
class RnnWeights(_Named):
    W_F: Tensor
    W_H: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, c: int, k: int = 3, dtype: object = None) -> "RnnWeights":
        return cls(glorot(rng, (k, k, c, c), dtype), glorot(rng, (k, k, c, c), dtype), _const((c,), 0.0, dtype))

    @property
    def channels(self) -> int:
        return self.W_F.shape[3]


AnyCellWeights = Union[CellWeights, GruWeights, RnnWeights]


@dataclass
class CcgUnit(_Named):
    """Prediction weights of one unit: context kernel, whole-stack kernel, bias."""

    W_Hp: Tensor
    W_Fp: Tensor
    b_p: Tensor


@dataclass
class CcgParams:
    units: list[CcgUnit]
    omega: float = math.sqrt(2.0)

    def __post_init__(self) -> None:
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        joints: int,
        c: int,
        total_channels: int,
        k: int = 3,
        omega: float = math.sqrt(2.0),
        dtype: object = None,
    ) -> "CcgParams":
        units = [
            CcgUnit(
                glorot(rng, (k, k, c, c), dtype),
                glorot(rng, (k, k, total_channels, c), dtype),
                _const((c,), 0.0, dtype),
            )
            for _ in range(joints)
        ]
        return cls(units, omega)

    def stacked_global(self) -> tuple[Tensor, Tensor]:
        """Every unit's whole-stack kernel and bias fused along output channels."""
        return (
            ops.concat([u.W_Fp for u in self.units], axis=-1),
            ops.concat([u.b_p for u in self.units], axis=-1),
        )


@dataclass
class DirectionParams:
    cell: AnyCellWeights
    ccg: CcgParams | None = None

    def named(self, direction: Direction) -> dict[str, Tensor]:
        tag = DIRECTION_TAGS[direction]
        out = {f"cell.{tag}.{name}": t for name, t in self.cell.named().items()}
        if self.ccg is not None:
            for j, unit in enumerate(self.ccg.units):
                out.update({f"ccg.{tag}.unit{j}.{name}": t for name, t in unit.named().items()})
        return out

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        cell_kind: str,
        joints: int,
        c: int,
        total_channels: int,
        k: int = 3,
        omega: float = math.sqrt(2.0),
        dtype: object = None,
    ) -> "DirectionParams":
        if cell_kind not in CELL_KINDS:
            raise ValueError(f"unknown cell kind {cell_kind!r}; choose from {CELL_KINDS}")
        if cell_kind == "convgru":
            return cls(GruWeights.init(rng, c, k, dtype))
        if cell_kind == "convrnn":
            return cls(RnnWeights.init(rng, c, k, dtype))
        cell = CellWeights.init(rng, c, k, dtype)
        ccg = CcgParams.init(rng, joints, c, total_channels, k, omega, dtype) if cell_kind == "convlstm_ccg" else None
        return cls(cell, ccg)

    @classmethod
    def from_named(
        cls,
        tensors: Mapping[str, Tensor],
        direction: Direction,
        cell_kind: str,
        joints: int,
        omega: float = math.sqrt(2.0),
    ) -> "DirectionParams":
        """Rebuild from the names produced by `named`."""
        tag = DIRECTION_TAGS[direction]
        weights_cls = {"convgru": GruWeights, "convrnn": RnnWeights}.get(cell_kind, CellWeights)
        try:
            cell = weights_cls(**{f.name: tensors[f"cell.{tag}.{f.name}"] for f in fields(weights_cls)})
            ccg = None
            if cell_kind == "convlstm_ccg":
                units = [
                    CcgUnit(**{f.name: tensors[f"ccg.{tag}.unit{j}.{f.name}"] for f in fields(CcgUnit)})
                    for j in range(joints)
                ]
                ccg = CcgParams(units, omega)
        except KeyError as e:
            raise CheckpointError(f"missing tensor {e.args[0]!r}") from e
        return cls(cell, ccg)  # type: ignore[arg-type]


@dataclass
class UnitState:
    H: Tensor
    C: Tensor | None = None


# ---- single-unit operations ------------------------------------------------------


def aggregate(states: Sequence[Tensor], like: Tensor | None = None) -> Tensor:
    """Mean of the linked units' maps; a zero map shaped like `like` when there are none."""
    if states:
        return ops.average(states)
    if like is None:
        raise PoseBoostError("aggregate of no states needs a reference map for the zero result")
    return Tensor(np.zeros(like.shape, dtype=like.dtype))


def _context(maps: Sequence[Tensor]) -> Tensor | None:
    return ops.average(maps) if maps else None


def _lstm_gates(
    F: Tensor, Hbar: Tensor | None, w: CellWeights, stacked: StackedGates | None
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    s = stacked if stacked is not None else w.stacked()
    c = w.channels
    if F.shape[-1] != c:
        raise ShapeError("convlstm_step", F.shape, w.W_Fi.shape, "input channels must equal cell width")
    z = ops.conv2d(F, s.W_F)
    if Hbar is not None:
        if Hbar.shape != F.shape:
            raise ShapeError("convlstm_step", F.shape, Hbar.shape, "context must match input")
        z = ops.add(z, ops.conv2d(Hbar, s.W_H))
    z = ops.add_bias(z, s.b)
    i = ops.sigmoid(ops.slice_channels(z, 0, c))
    f = ops.sigmoid(ops.slice_channels(z, c, 2 * c))
    g = ops.tanh(ops.slice_channels(z, 2 * c, 3 * c))
    o = ops.sigmoid(ops.slice_channels(z, 3 * c, 4 * c))
    return i, f, g, o


def convlstm_step(
    F: Tensor,
    Hbar: Tensor | None,
    Cbar: Tensor | None,
    w: CellWeights,
    stacked: StackedGates | None = None,
) -> UnitState:
    """One ConvLSTM unit: C = f∘C̄ + i∘c̃, H = o∘tanh(C). ``None`` context means zero."""
    i, f, g, o = _lstm_gates(F, Hbar, w, stacked)
    C = ops.mul(i, g)
    if Cbar is not None:
        if Cbar.shape != F.shape:
            raise ShapeError("convlstm_step", F.shape, Cbar.shape, "cell context must match input")
        C = ops.add(ops.mul(f, Cbar), C)
    return UnitState(H=ops.mul(o, ops.tanh(C)), C=C)


def ccg_predict(
    linked_H: Sequence[Tensor],
    F: Tensor | None,
    unit: CcgUnit,
    global_term: Tensor | None = None,
) -> Tensor:
    """
    Context-based prediction of a unit's input maps.

    `global_term` may carry a precomputed ``F * W_Fp + b_p`` for this unit;
    otherwise it is computed from the whole feature stack `F`.
    """
    if global_term is None:
        if F is None:
            raise PoseBoostError("ccg_predict needs the feature stack or its precomputed term")
        global_term = ops.conv2d(F, unit.W_Fp, unit.b_p)
    if linked_H:
        hidden = ops.average([ops.conv2d(h, unit.W_Hp) for h in linked_H])
        if hidden.shape != global_term.shape:
            raise ShapeError("ccg_predict", hidden.shape, global_term.shape)
        return ops.tanh(ops.add(hidden, global_term))
    return ops.tanh(global_term)


def ccg_gate(P: Tensor, F_j: Tensor, omega: float) -> Tensor:
    """G = exp(-(P - tanh(F_j))² / ω²), elementwise in (0, 1]."""
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    if P.shape != F_j.shape:
        raise ShapeError("ccg_gate", P.shape, F_j.shape)
    diff = ops.sub(P, ops.tanh(F_j))
    # exp underflows to 0 for small omega; G must stay positive
    return ops.floor_tiny(ops.exp(ops.scale(ops.square(diff), -1.0 / (omega * omega))))


def convlstm_step_gated(
    F: Tensor,
    Hbar: Tensor | None,
    Cbar: Tensor | None,
    w: CellWeights,
    G: Tensor,
    stacked: StackedGates | None = None,
) -> UnitState:
    """Gated update: C = (f∘C̄)∘(1−G) + (i∘c̃)∘G, H = o∘tanh(C)."""
    if G.shape != F.shape:
        raise ShapeError("convlstm_step_gated", F.shape, G.shape, "gate must match input")
    i, f, g, o = _lstm_gates(F, Hbar, w, stacked)
    C = ops.mul(ops.mul(i, g), G)
    if Cbar is not None:
        if Cbar.shape != F.shape:
            raise ShapeError("convlstm_step_gated", F.shape, Cbar.shape, "cell context must match input")
        C = ops.add(ops.mul(ops.mul(f, Cbar), ops.rsub(1.0, G)), C)
    return UnitState(H=ops.mul(o, ops.tanh(C)), C=C)


def convgru_step(F: Tensor, Hbar: Tensor | None, w: GruWeights) -> Tensor:
    """ConvGRU: H = (1−z)∘H̄ + z∘h̃ with h̃ = tanh(F*W_Fh + (r∘H̄)*W_Hh + b_h)."""
    if F.shape[-1] != w.channels:
        raise ShapeError("convgru_step", F.shape, w.W_Fz.shape)
    zpre = ops.conv2d(F, w.W_Fz, w.b_z)
    rpre = ops.conv2d(F, w.W_Fr, w.b_r)
    hpre = ops.conv2d(F, w.W_Fh, w.b_h)
    if Hbar is None:
        z = ops.sigmoid(zpre)
        return ops.mul(z, ops.tanh(hpre))
    if Hbar.shape != F.shape:
        raise ShapeError("convgru_step", F.shape, Hbar.shape)
    z = ops.sigmoid(ops.add(zpre, ops.conv2d(Hbar, w.W_Hz)))
    r = ops.sigmoid(ops.add(rpre, ops.conv2d(Hbar, w.W_Hr)))
    h_tilde = ops.tanh(ops.add(hpre, ops.conv2d(ops.mul(r, Hbar), w.W_Hh)))
    return ops.add(ops.mul(ops.rsub(1.0, z), Hbar), ops.mul(z, h_tilde))


def convrnn_step(F: Tensor, Hbar: Tensor | None, w: RnnWeights) -> Tensor:
    """ConvRNN: H = tanh(F*W_F + H̄*W_H + b)."""
    if F.shape[-1] != w.channels:
        raise ShapeError("convrnn_step", F.shape, w.W_F.shape)
    pre = ops.conv2d(F, w.W_F, w.b)
    if Hbar is not None:
        if Hbar.shape != F.shape:
            raise ShapeError("convrnn_step", F.shape, Hbar.shape)
        pre = ops.add(pre, ops.conv2d(Hbar, w.W_H))
    return ops.tanh(pre)


# ---- graph runners ---------------------------------------------------------------


@dataclass
class DirectionResult:
    hidden: list[Tensor]
    cells: list[Tensor | None]
    gates: list[Tensor | None] = field(default_factory=list)


def run_direction(
    order: PassOrder,
    inputs: Sequence[Tensor],
    params: DirectionParams,
    cell_kind: str,
    features: Tensor | None = None,
) -> DirectionResult:
    """Evaluate every unit of one direction in schedule order."""
    n = len(order.sequence)
    if len(inputs) != n:
        raise PoseBoostError(f"run_direction needs {n} joint inputs, got {len(inputs)}")
    if cell_kind not in CELL_KINDS:
        raise ValueError(f"unknown cell kind {cell_kind!r}; choose from {CELL_KINDS}")

    hidden: list[Tensor | None] = [None] * n
    cells: list[Tensor | None] = [None] * n
    gates: list[Tensor | None] = [None] * n

    stacked = params.cell.stacked() if isinstance(params.cell, CellWeights) else None
    global_terms: list[Tensor] | None = None
    if cell_kind == "convlstm_ccg":
        if params.ccg is None or features is None:
            raise PoseBoostError("convlstm_ccg needs gate parameters and the whole feature stack")
        if len(params.ccg.units) != n:
            raise PoseBoostError(f"gate parameters cover {len(params.ccg.units)} units, graph has {n}")
        W_all, b_all = params.ccg.stacked_global()
        fused = ops.conv2d(features, W_all, b_all)
        c = params.ccg.units[0].b_p.shape[0]
        global_terms = [ops.slice_channels(fused, j * c, (j + 1) * c) for j in range(n)]

    for j in order.sequence:
        linked = [hidden[k] for k in order.preds[j]]
        linked_H = [h for h in linked if h is not None]
        Hbar = _context(linked_H)
        F_j = inputs[j]
        if cell_kind in ("convlstm", "convlstm_ccg"):
            assert isinstance(params.cell, CellWeights)
            Cbar = _context([cells[k] for k in order.preds[j]])  # type: ignore[misc]
            if global_terms is not None:
                assert params.ccg is not None
                P = ccg_predict(linked_H, None, params.ccg.units[j], global_terms[j])
                G = ccg_gate(P, F_j, params.ccg.omega)
                state = convlstm_step_gated(F_j, Hbar, Cbar, params.cell, G, stacked)
                gates[j] = G
            else:
                state = convlstm_step(F_j, Hbar, Cbar, params.cell, stacked)
            hidden[j], cells[j] = state.H, state.C
        elif cell_kind == "convgru":
            assert isinstance(params.cell, GruWeights)
            hidden[j] = convgru_step(F_j, Hbar, params.cell)
        else:
            assert isinstance(params.cell, RnnWeights)
            hidden[j] = convrnn_step(F_j, Hbar, params.cell)

    return DirectionResult(hidden=[h for h in hidden if h is not None], cells=cells, gates=gates)


@dataclass
class BidirectionalResult:
    outputs: list[Tensor]
    forward: DirectionResult
    backward: DirectionResult | None = None


def run_bidirectional(
    graph: SkeletonGraph,
    inputs: Sequence[Tensor],
    params_fwd: DirectionParams,
    params_bwd: DirectionParams | None,
    cell_kind: str,
    features: Tensor | None = None,
    directions: Sequence[Direction] = ("forward", "backward"),
) -> BidirectionalResult:
    """Per-joint sum of the forward and backward hidden states."""
    fwd = run_direction(pass_order(graph, "forward"), inputs, params_fwd, cell_kind, features)
    if "backward" not in directions:
        return BidirectionalResult(outputs=list(fwd.hidden), forward=fwd)
    if params_bwd is None:
        raise PoseBoostError("backward pass requested without backward parameters")
    bwd = run_direction(pass_order(graph, "backward"), inputs, params_bwd, cell_kind, features)
    outputs = [ops.add(a, b) for a, b in zip(fwd.hidden, bwd.hidden)]
    return BidirectionalResult(outputs=outputs, forward=fwd, backward=bwd)
