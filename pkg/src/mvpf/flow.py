"""Flow matching with a linear noise-to-data interpolant.

Time runs from ``t=0`` (noise) to ``t=1`` (data). The model regresses the
constant displacement ``x1 - x0``; generation integrates that velocity field
with forward Euler on a uniform grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractError, DimensionError, DivergenceError, TrainingError
from .grad import tensor as T
from .grad.tensor import Tensor


def interpolate(x0: np.ndarray, x1: np.ndarray, t) -> np.ndarray:
    """``(1 - t) x0 + t x1``; the endpoints are returned bit-exactly.

    ``t`` may be a scalar or broadcastable against the leading axes.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise DimensionError(f"dimension mismatch: {x0.shape} vs {x1.shape}")
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0) or np.any(t > 1):
        raise ContractError("t must lie in [0, 1]")
    t = t.reshape(t.shape + (1,) * (x0.ndim - t.ndim))
    xt = (1.0 - t) * x0 + t * x1
    xt = np.where(t == 0, x0, xt)
    return np.where(t == 1, x1, xt)


@dataclass
class FlowSample:
    x0: np.ndarray
    x1: np.ndarray
    t: np.ndarray

    @property
    def xt(self) -> np.ndarray:
        return interpolate(self.x0, self.x1, self.t)

    @property
    def target_v(self) -> np.ndarray:
        return np.asarray(self.x1, dtype=np.float64) - np.asarray(self.x0, dtype=np.float64)

    @classmethod
    def draw(cls, x1: np.ndarray, rng: np.random.Generator, t=None) -> "FlowSample":
        """Standard-normal ``x0`` and uniform ``t`` (one per leading-axis item)."""
        x1 = np.asarray(x1, dtype=np.float64)
        x0 = rng.standard_normal(x1.shape)
        if t is None:
            t = rng.uniform(0.0, 1.0, size=x1.shape[:1])
        return cls(x0, x1, np.asarray(t, dtype=np.float64))


@dataclass
class SamplerConfig:
    steps: int = 50

    def __post_init__(self):
        if int(self.steps) < 1:
            raise ContractError(f"sampler needs K >= 1 steps, got {self.steps}")
        self.steps = int(self.steps)

    def grid(self) -> np.ndarray:
        return np.arange(self.steps + 1) / self.steps


def fm_loss(model: Callable, sample: FlowSample, cond=None) -> Tensor:
    """Mean over all elements of ``(v_theta(xt, cond, t) - (x1 - x0))^2``."""
    pred = model(Tensor(sample.xt), cond, sample.t)
    pred = T.as_tensor(pred)
    target = sample.target_v
    if pred.shape != target.shape:
        raise DimensionError(f"model output {pred.shape} does not match data {target.shape}")
    if not np.all(np.isfinite(pred.data)):
        raise TrainingError("model produced non-finite velocities")
    diff = pred - target
    return T.mean(diff * diff)


def sample_euler(model: Callable, x0: np.ndarray, cond=None, steps: int = 50) -> np.ndarray:
    """Integrate ``dx/dt = v(x, cond, t)`` from ``t=0`` to ``1`` in ``steps`` Euler steps."""
    cfg = SamplerConfig(steps)
    x = np.array(x0, dtype=np.float64)
    h = 1.0 / cfg.steps
    for k in range(cfg.steps):
        v = model(Tensor(x), cond, k / cfg.steps)
        v = v.data if isinstance(v, Tensor) else np.asarray(v)
        x = x + h * v
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"sampler state became non-finite at step {k}")
    return x
