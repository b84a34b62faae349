# pose_boost/ops.py
"""
Differentiable primitives.

Every function takes and returns `Tensor`s and records a vector-Jacobian
product on the active tape when any input requires a gradient. Binary
elementwise operations demand identical shapes; the only broadcasting is
`add_bias`, which adds a per-channel vector along the last axis. Python
scalars are accepted by `add`, `sub` and `mul` as plain shifts and scales.

Maps are channels-last: ``[h, w, c]`` or batched ``[n, h, w, c]``.
"""
from __future__ import annotations

from typing import Any, Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from pose_boost.errors import ShapeError
from pose_boost.tensor import Tensor, active_tape

Scalar = (int, float, np.floating, np.integer)


def _emit(
    op: str,
    data: np.ndarray,
    inputs: Sequence[Tensor],
    vjp: Callable[[np.ndarray], Sequence["np.ndarray | None"]],
) -> Tensor:
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires, dtype=data.dtype)
    if requires:
        tape = active_tape()
        if tape is not None:
            tape.record(op, out, inputs, vjp)
    return out


def _same(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(op, a.shape, b.shape)


def _batched(data: np.ndarray) -> tuple[np.ndarray, bool]:
    if data.ndim == 4:
        return data, False
    if data.ndim == 3:
        return data[None], True
    raise ShapeError("map", data.shape, (), "expected [h,w,c] or [n,h,w,c]")


# ---- binary elementwise ------------------------------------------------------


def add(a: Tensor, b: Any) -> Tensor:
    if isinstance(b, Scalar):
        return shift(a, float(b))
    _same("add", a, b)
    return _emit("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Any) -> Tensor:
    if isinstance(b, Scalar):
        return shift(a, -float(b))
    _same("sub", a, b)
    return _emit("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Any) -> Tensor:
    if isinstance(b, Scalar):
        return scale(a, float(b))
    _same("mul", a, b)
    ad, bd = a.data, b.data
    return _emit("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, s: float) -> Tensor:
    s = a.dtype.type(s)
    return _emit("scale", a.data * s, (a,), lambda g: (g * s,))


def shift(a: Tensor, s: float) -> Tensor:
    s = a.dtype.type(s)
    return _emit("shift", a.data + s, (a,), lambda g: (g,))


def rsub(s: float, a: Tensor) -> Tensor:
    """``s - a`` for a Python scalar `s`."""
    s = a.dtype.type(s)
    return _emit("rsub", s - a.data, (a,), lambda g: (-g,))


# ---- unary elementwise -------------------------------------------------------


def sigmoid(a: Tensor) -> Tensor:
    y = expit(a.data).astype(a.dtype, copy=False)
    return _emit("sigmoid", y, (a,), lambda g: (g * y * (1 - y),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _emit("tanh", y, (a,), lambda g: (g * (1 - y * y),))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _emit("exp", y, (a,), lambda g: (g * y,))


def square(a: Tensor) -> Tensor:
    x = a.data
    return _emit("square", x * x, (a,), lambda g: (2 * g * x,))


def relu(a: Tensor) -> Tensor:
    x = a.data
    mask = (x > 0).astype(x.dtype)
    return _emit("relu", x * mask, (a,), lambda g: (g * mask,))


def floor_tiny(a: Tensor) -> Tensor:
    """Raise values below the dtype's smallest normal number to it; the gradient passes through."""
    tiny = np.finfo(a.dtype).tiny
    return _emit("floor_tiny", np.maximum(a.data, tiny), (a,), lambda g: (g,))


_UNARY = {"sigmoid": sigmoid, "tanh": tanh, "exp": exp, "square": square, "relu": relu}
_BINARY = {"mul": mul, "add": add, "sub": sub}


def elementwise(op: str, *args: Tensor) -> Tensor:
    """Dispatch by name: sigmoid | tanh | exp | square | relu | mul | add | sub."""
    if op in _UNARY:
        if len(args) != 1:
            raise TypeError(f"{op} takes one operand, got {len(args)}")
        return _UNARY[op](args[0])
    if op in _BINARY:
        if len(args) != 2:
            raise TypeError(f"{op} takes two operands, got {len(args)}")
        return _BINARY[op](args[0], args[1])
    raise ValueError(f"unknown elementwise op {op!r}")


def activation(name: str) -> Callable[[Tensor], Tensor]:
    if name not in ("relu", "tanh"):
        raise ValueError(f"unknown activation {name!r}")
    return _UNARY[name]


# ---- reductions --------------------------------------------------------------


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = a.shape
    return _emit(
        "sum", np.asarray(a.data.sum(), dtype=a.dtype), (a,), lambda g: (np.full(shape, g, dtype=a.dtype),)
    )


def mean(a: Tensor) -> Tensor:
    shape, n = a.shape, a.size
    return _emit(
        "mean",
        np.asarray(a.data.mean(), dtype=a.dtype),
        (a,),
        lambda g: (np.full(shape, g / n, dtype=a.dtype),),
    )


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error over every element."""
    return mean(square(sub(a, b)))


def average(tensors: Sequence[Tensor]) -> Tensor:
    """Elementwise arithmetic mean of same-shaped tensors."""
    if not tensors:
        raise ValueError("average of an empty list")
    first = tensors[0]
    for t in tensors[1:]:
        _same("average", first, t)
    n = len(tensors)
    if n == 1:
        return first
    acc = first.data.copy()
    for t in tensors[1:]:
        acc += t.data
    inv = first.dtype.type(1.0 / n)
    # Sum then scale, in list order.
    return _emit("average", acc * inv, tuple(tensors), lambda g: tuple(g * inv for _ in range(n)))


# ---- shape plumbing ----------------------------------------------------------


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeError("reshape", a.shape, shape)
    src = a.shape
    return _emit("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ValueError("concat of an empty list")
    ndim = tensors[0].ndim
    ax = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != ax
        ):
            raise ShapeError("concat", tensors[0].shape, t.shape, f"axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]
    data = np.concatenate([t.data for t in tensors], axis=ax)
    return _emit(
        "concat", data, tuple(tensors), lambda g: tuple(np.split(g, bounds, axis=ax))
    )


def slice_channels(a: Tensor, start: int, stop: int) -> Tensor:
    c = a.shape[-1]
    if not 0 <= start < stop <= c:
        raise ShapeError("slice_channels", a.shape, (start, stop), "channel range out of bounds")
    shape, dtype = a.shape, a.dtype

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros(shape, dtype=dtype)
        full[..., start:stop] = g
        return (full,)

    return _emit("slice_channels", a.data[..., start:stop], (a,), vjp)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a per-channel bias along the last axis, the one sanctioned broadcast."""
    if b.ndim != 1 or b.shape[0] != x.shape[-1]:
        raise ShapeError("add_bias", x.shape, b.shape, "bias must match the channel axis")
    axes = tuple(range(x.ndim - 1))
    return _emit("add_bias", x.data + b.data, (x, b), lambda g: (g, g.sum(axis=axes)))


def matmul(a: Tensor, w: Tensor) -> Tensor:
    if a.ndim != 2 or w.ndim != 2 or a.shape[1] != w.shape[0]:
        raise ShapeError("matmul", a.shape, w.shape)
    ad, wd = a.data, w.data
    return _emit("matmul", ad @ wd, (a, w), lambda g: (g @ wd.T, ad.T @ g))


# ---- spatial -----------------------------------------------------------------


def conv2d(
    x: Tensor, kernel: Tensor, bias: Tensor | None = None, padding: str = "same"
) -> Tensor:
    """
    Cross-correlation of `x` with `kernel` ``[kh, kw, cin, cout]`` plus per-channel bias.

    ``padding="same"`` zero-pads so the spatial extent is preserved (odd kernels only);
    ``padding="valid"`` does not pad.
    """
    if kernel.ndim != 4:
        raise ShapeError("conv2d", x.shape, kernel.shape, "kernel must be [kh,kw,cin,cout]")
    kh, kw, cin, cout = kernel.shape
    if x.ndim not in (3, 4) or x.shape[-1] != cin:
        raise ShapeError("conv2d", x.shape, kernel.shape, "input channels must equal kernel cin")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError("conv2d", kernel.shape, bias.shape, "bias must be [cout]")
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError("conv2d", x.shape, kernel.shape, "same padding needs odd kernel sizes")
        ph, pw = kh // 2, kw // 2
    elif padding == "valid":
        ph = pw = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")

    xd, squeeze = _batched(x.data)
    n, h, w, _ = xd.shape
    if h + 2 * ph < kh or w + 2 * pw < kw:
        raise ShapeError("conv2d", x.shape, kernel.shape, "kernel larger than padded input")
    kd = kernel.data

    if kh == 1 and kw == 1:
        k2 = kd[0, 0]
        out = np.tensordot(xd, k2, axes=([3], [0]))
        windows = None
    else:
        xp = np.pad(xd, ((0, 0), (ph, ph), (pw, pw), (0, 0))) if (ph or pw) else xd
        windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # [n,H',W',cin,kh,kw]
        out = np.tensordot(windows, kd, axes=([3, 4, 5], [2, 0, 1]))
    if bias is not None:
        out = out + bias.data
    out = out.astype(x.dtype, copy=False)

    def vjp(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        g4 = g[None] if squeeze else g
        if windows is None:
            gk = np.tensordot(xd, g4, axes=([0, 1, 2], [0, 1, 2]))[None, None]
            gx = np.tensordot(g4, kd[0, 0], axes=([3], [1]))
        else:
            gk = np.tensordot(windows, g4, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)
            gp = np.pad(g4, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
            gwin = sliding_window_view(gp, (kh, kw), axis=(1, 2))  # [n,Hp,Wp,cout,kh,kw]
            flipped = kd[::-1, ::-1]
            gxp = np.tensordot(gwin, flipped, axes=([3, 4, 5], [3, 0, 1]))
            gx = gxp[:, ph : ph + h, pw : pw + w]
        if squeeze:
            gx = gx[0]
        grads: list[np.ndarray | None] = [gx, gk]
        if bias is not None:
            grads.append(g4.sum(axis=(0, 1, 2)))
        return grads

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return _emit("conv2d", out[0] if squeeze else out, inputs, vjp)


def avg_pool2d(x: Tensor, size: int = 2) -> Tensor:
    xd, squeeze = _batched(x.data)
    n, h, w, c = xd.shape
    if h % size or w % size:
        raise ShapeError("avg_pool2d", x.shape, (size, size), "extent not divisible by pool size")
    out = xd.reshape(n, h // size, size, w // size, size, c).mean(axis=(2, 4))
    inv = x.dtype.type(1.0 / (size * size))

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        g4 = g[None] if squeeze else g
        up = np.repeat(np.repeat(g4, size, axis=1), size, axis=2) * inv
        return (up[0] if squeeze else up,)

    return _emit("avg_pool2d", out[0] if squeeze else out, (x,), vjp)


def upsample2d(x: Tensor, factor: int = 2) -> Tensor:
    """Nearest-neighbour upsampling."""
    xd, squeeze = _batched(x.data)
    n, h, w, c = xd.shape
    out = np.repeat(np.repeat(xd, factor, axis=1), factor, axis=2)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        g4 = g[None] if squeeze else g
        down = g4.reshape(n, h, factor, w, factor, c).sum(axis=(2, 4))
        return (down[0] if squeeze else down,)

    return _emit("upsample2d", out[0] if squeeze else out, (x,), vjp)
