# pose_boost/optim.py
"""Stochastic gradient descent with momentum and a step learning-rate schedule."""
from __future__ import annotations

import logging
from typing import Mapping

import numpy as np

from pose_boost.errors import CheckpointError
from pose_boost.tensor import Tensor

log = logging.getLogger(__name__)

MOMENTUM_PREFIX = "optim.momentum."
STEP_KEY = "train.step"


class SGD:
    """
    ``v <- momentum * v - lr * g``; ``p <- p + v``, in place on the parameter buffers.

    The rate is multiplied by `lr_decay` every `lr_step` steps (never when 0).
    """

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float,
        momentum: float = 0.9,
        lr_decay: float = 1.0,
        lr_step: int = 0,
    ) -> None:
        self.params = dict(params)
        self.lr = lr
        self.momentum = momentum
        self.lr_decay = lr_decay
        self.lr_step = lr_step
        self.step_count = 0
        self.velocity = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def current_lr(self) -> float:
        if not self.lr_step:
            return self.lr
        return self.lr * self.lr_decay ** (self.step_count // self.lr_step)

    def step(self, grads: Mapping[str, np.ndarray]) -> float:
        """Apply one update; parameters missing from `grads` get a zero gradient. Returns the rate used."""
        lr = self.current_lr()
        for name, p in self.params.items():
            v = self.velocity[name]
            v *= self.momentum
            g = grads.get(name)
            if g is not None:
                v -= lr * g
            p.data += v
        self.step_count += 1
        return lr

    def state(self) -> dict[str, np.ndarray]:
        out = {MOMENTUM_PREFIX + k: v.copy() for k, v in self.velocity.items()}
        out[STEP_KEY] = np.array([self.step_count], dtype=np.float64)
        return out

    def load_state(self, tensors: Mapping[str, np.ndarray]) -> None:
        if STEP_KEY not in tensors:
            raise CheckpointError(f"checkpoint has no {STEP_KEY!r}; cannot resume")
        for name in self.params:
            key = MOMENTUM_PREFIX + name
            if key not in tensors:
                raise CheckpointError(f"checkpoint has no momentum buffer for {name}")
            self.velocity[name] = np.array(tensors[key], dtype=self.params[name].data.dtype)
        self.step_count = int(tensors[STEP_KEY][0])
        log.info("Restored optimizer state at step %d", self.step_count)
