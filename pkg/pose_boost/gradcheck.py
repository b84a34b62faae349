# pose_boost/gradcheck.py
"""Central-difference gradient checking against the tape."""
from __future__ import annotations

import logging
import math
from typing import Callable, Sequence

import numpy as np

from pose_boost.errors import GradCheckError, PoseBoostError
from pose_boost.tensor import Tape, Tensor, backward

log = logging.getLogger(__name__)

LossFn = Callable[[Sequence[Tensor]], Tensor]


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))


def _value(fn: LossFn, params: Sequence[Tensor], pi: int, ei: int) -> float:
    out = fn(params)
    if out.ndim != 0:
        raise PoseBoostError(f"gradient check needs a scalar function, got shape {out.shape}")
    v = float(out.data)
    if not math.isfinite(v):
        raise GradCheckError(pi, ei, f"function value {v}")
    return v


def grad_check(
    fn: LossFn,
    params: Sequence[Tensor],
    eps: float = 1e-5,
    *,
    max_elements: int | None = None,
    seed: int = 0,
) -> float:
    """
    Compare tape gradients of ``fn(params)`` with central differences.

    Returns the maximum over checked elements of
    ``|analytic - numeric| / max(1e-8, |analytic| + |numeric|)``.
    With `max_elements` only a seeded random subset of each parameter's
    elements is perturbed. Parameter buffers are restored after every probe.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")

    with Tape() as tape:
        loss = fn(params)
    backward(tape, loss)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for pi, p in enumerate(params):
        analytic = tape.grad(p).reshape(-1)
        flat = p.data.reshape(-1)
        if not np.shares_memory(flat, p.data):
            raise PoseBoostError(f"parameter {pi} buffer is not contiguous")
        indices: Sequence[int] = range(flat.size)
        if max_elements is not None and flat.size > max_elements:
            indices = sorted(rng.choice(flat.size, size=max_elements, replace=False).tolist())
        for ei in indices:
            a = float(analytic[ei])
            if not math.isfinite(a):
                raise GradCheckError(pi, ei, f"analytic gradient {a}")
            original = flat[ei]
            try:
                flat[ei] = original + eps
                plus = _value(fn, params, pi, ei)
                flat[ei] = original - eps
                minus = _value(fn, params, pi, ei)
            finally:
                flat[ei] = original
            numeric = (plus - minus) / (2 * eps)
            worst = max(worst, relative_error(a, numeric))
    log.info("gradient check over %d parameters: max relative error %.3e", len(params), worst)
    return worst
