# pose_boost/tensor.py
"""
Dense tensors and the reverse-mode tape.

A `Tensor` wraps a contiguous numpy array. Operations in `pose_boost.ops`
record themselves on the innermost active `Tape` whenever one of their inputs
requires a gradient; `backward` then walks the tape in exact reverse order.

Tensors are treated as immutable values. The one sanctioned exception is a
trainable parameter, whose buffer the optimizer (and the gradient checker)
updates in place between passes.
"""
from __future__ import annotations

import contextlib
import logging
import threading
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from pose_boost.errors import PoseBoostError

log = logging.getLogger(__name__)

DTYPES: dict[str, type[np.floating[Any]]] = {
    "float32": np.float32,
    "float64": np.float64,
}

_state = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = []
        _state.tapes = stack
    return stack


def get_default_dtype() -> np.dtype:
    """The dtype new tensors get when none is given (thread-local)."""
    return np.dtype(getattr(_state, "dtype", np.float32))


def set_default_dtype(name: str) -> None:
    if name not in DTYPES:
        raise ValueError(f"unknown precision {name!r}; expected one of {sorted(DTYPES)}")
    _state.dtype = DTYPES[name]


@contextlib.contextmanager
def precision(name: str) -> Iterator[None]:
    """Temporarily switch the default dtype, e.g. ``with precision("float64"):``."""
    previous = get_default_dtype()
    set_default_dtype(name)
    try:
        yield
    finally:
        _state.dtype = previous.type


class Tensor:
    """An n-dimensional array with an optional gradient requirement."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        dtype: Any = None,
        name: str | None = None,
    ) -> None:
        if dtype is None:
            if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
                dtype = data.dtype
            else:
                dtype = get_default_dtype()
        arr = np.ascontiguousarray(np.asarray(data, dtype=dtype))
        if any(extent <= 0 for extent in arr.shape):
            raise PoseBoostError(f"tensor extents must be positive, got {arr.shape}")
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    # Operator sugar; implementations live in ops.
    def __add__(self, other: Any) -> "Tensor":
        from pose_boost import ops

        return ops.add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        from pose_boost import ops

        return ops.add(self, other)

    def __sub__(self, other: Any) -> "Tensor":
        from pose_boost import ops

        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        from pose_boost import ops

        return ops.rsub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        from pose_boost import ops

        return ops.mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        from pose_boost import ops

        return ops.mul(self, other)

    def __neg__(self) -> "Tensor":
        from pose_boost import ops

        return ops.scale(self, -1.0)


def zeros(shape: Sequence[int], dtype: Any = None, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(tuple(shape), dtype=dtype or get_default_dtype()), requires_grad)


def ones(shape: Sequence[int], dtype: Any = None, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(tuple(shape), dtype=dtype or get_default_dtype()), requires_grad)


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@dataclass
class TapeEntry:
    """One executed operation: its output, its parents and its vector-Jacobian product."""

    op: str
    output: Tensor
    inputs: tuple[Tensor, ...]
    backward: BackwardFn


class Tape:
    """
    Ordered record of operations executed while the tape is active.

    Use as a context manager; tapes nest per thread and only the innermost one
    records. Gradients accumulate across `backward` calls until `zero_grad`.
    By default only leaf tensors (those not produced on this tape) keep their
    gradients; pass ``retain_all=True`` to keep intermediate gradients too.
    """

    def __init__(self, retain_all: bool = False) -> None:
        self.entries: list[TapeEntry] = []
        self.retain_all = retain_all
        self._grads: dict[Tensor, np.ndarray] = {}
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.entries)

    def record(
        self, op: str, output: Tensor, inputs: Sequence[Tensor], backward: BackwardFn
    ) -> None:
        self.entries.append(TapeEntry(op, output, tuple(inputs), backward))
        self._produced.add(id(output))

    def grad(self, tensor: Tensor) -> np.ndarray:
        """Accumulated gradient of `tensor`; exactly zero if it never received one."""
        g = self._grads.get(tensor)
        if g is None:
            return np.zeros_like(tensor.data)
        return g.copy()

    @property
    def grads(self) -> dict[Tensor, np.ndarray]:
        return dict(self._grads)

    def zero_grad(self) -> None:
        self._grads.clear()

    def _accumulate(self, tensor: Tensor, g: np.ndarray) -> None:
        if not self.retain_all and id(tensor) in self._produced:
            return
        g = np.asarray(g, dtype=tensor.dtype).reshape(tensor.shape)
        prev = self._grads.get(tensor)
        self._grads[tensor] = g.copy() if prev is None else prev + g


def active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def backward(tape: Tape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """
    Propagate d(loss)/d(.) through `tape` in exact reverse execution order.

    Returns a snapshot of the accumulated gradients keyed by tensor identity.
    """
    if loss.ndim != 0:
        raise PoseBoostError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise PoseBoostError("loss is not reachable from any tracked tensor")

    cotangents: dict[Tensor, np.ndarray] = {loss: np.ones((), dtype=loss.dtype)}
    for entry in reversed(tape.entries):
        g = cotangents.pop(entry.output, None)
        if g is None:
            continue
        tape._accumulate(entry.output, g)
        for parent, pg in zip(entry.inputs, entry.backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = cotangents.get(parent)
            cotangents[parent] = pg if prev is None else prev + pg

    # Whatever is left was never produced on this tape: leaves.
    for tensor, g in cotangents.items():
        tape._accumulate(tensor, g)
    log.debug("backward visited %d tape entries", len(tape.entries))
    return tape.grads
