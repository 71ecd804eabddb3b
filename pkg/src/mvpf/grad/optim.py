"""AdamW and the learning-rate decay used by the trainer."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .nn import Param


def cosine_lr(step: int, total: int, lr_start: float = 1e-4, lr_end: float = 2e-5) -> float:
    """Cosine decay from ``lr_start`` (step 0) to ``lr_end`` (step ``total - 1``)."""
    if total <= 1:
        return lr_start
    frac = min(max(step / (total - 1), 0.0), 1.0)
    return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + math.cos(math.pi * frac))


class AdamW:
    """Decoupled weight decay Adam. Only ``trainable`` params are touched."""

    def __init__(self, params: Sequence[Param], lr: float = 1e-4, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = [p for p in params if p.trainable]
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            data = p.tensor.data
            if self.weight_decay:
                data *= 1.0 - self.lr * self.weight_decay
            data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.tensor.grad = np.zeros_like(p.tensor.data)
