"""Central finite-difference checks of reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """``|a - b| / max(|a|, |b|, floor)``; the floor keeps near-zero entries meaningful."""
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def numeric_grad(fn: Callable[[], Tensor], leaf: np.ndarray, index, h: float = 1e-5) -> float:
    old = leaf[index]
    leaf[index] = old + h
    with no_grad():
        up = fn().item()
    leaf[index] = old - h
    with no_grad():
        down = fn().item()
    leaf[index] = old
    return (up - down) / (2.0 * h)


def check_gradients(fn: Callable[[], Tensor], leaves: Sequence[Tensor], h: float = 1e-5,
                    max_entries: int | None = None, rng: np.random.Generator | None = None,
                    floor: float = 1e-8) -> float:
    """Largest relative error between autodiff and central differences.

    ``fn`` rebuilds the scalar loss from the current leaf values. With
    ``max_entries`` only a random subset of each leaf's entries is probed.
    """
    for leaf in leaves:
        leaf.grad = None
    loss = fn()
    backward(loss)
    worst = 0.0
    rng = rng or np.random.default_rng(0)
    for leaf in leaves:
        analytic = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad.copy()
        flat = np.arange(leaf.data.size)
        if max_entries is not None and flat.size > max_entries:
            flat = rng.choice(flat, size=max_entries, replace=False)
        for i in flat:
            idx = np.unravel_index(i, leaf.data.shape)
            num = numeric_grad(fn, leaf.data, idx, h)
            worst = max(worst, float(relative_error(analytic[idx], num, floor)))
    return worst
