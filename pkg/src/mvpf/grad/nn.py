"""Parameters, modules and the layers the denoiser is built from."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from ..errors import DimensionError
from . import tensor as T
from .tensor import Tensor


class Param:
    """A named, optionally frozen model weight."""

    __slots__ = ("id", "tensor", "_trainable")

    def __init__(self, data: np.ndarray, trainable: bool = True):
        self.id = ""
        self.tensor = Tensor(data, requires_grad=trainable)
        self._trainable = trainable

    @property
    def trainable(self) -> bool:
        return self._trainable

    @trainable.setter
    def trainable(self, flag: bool) -> None:
        self._trainable = bool(flag)
        self.tensor.requires_grad = bool(flag)
        self.tensor.grad = np.zeros_like(self.tensor.data)

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self) -> np.ndarray:
        g = self.tensor.grad
        return np.zeros_like(self.tensor.data) if g is None else g

    def __repr__(self) -> str:
        return f"Param({self.id!r}, shape={self.data.shape}, trainable={self.trainable})"


class Module:
    """Minimal container: attributes that are Params or Modules are parameters/children."""

    def named_params(self, prefix: str = "") -> dict[str, Param]:
        out: dict[str, Param] = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Param):
                value.id = key
                out[key] = value
            elif isinstance(value, Module):
                out.update(value.named_params(key + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_params(f"{key}.{i}."))
        return out

    def params(self) -> list[Param]:
        return list(self.named_params().values())

    def zero_grad(self) -> None:
        for p in self.params():
            p.tensor.grad = np.zeros_like(p.tensor.data)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_params().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        named = self.named_params()
        missing = set(named) - set(state)
        extra = set(state) - set(named)
        if missing or extra:
            raise DimensionError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, p in named.items():
            arr = np.asarray(state[k])
            if arr.shape != p.data.shape:
                raise DimensionError(f"{k}: shape {arr.shape} != {p.data.shape}")
            p.tensor.data = arr.astype(p.data.dtype).copy()

    def astype(self, dtype) -> "Module":
        for p in self.params():
            p.tensor.data = p.tensor.data.astype(dtype)
            p.tensor.grad = np.zeros_like(p.tensor.data)
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Linear(Module):
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator, bias: bool = True,
                 zero_init: bool = False):
        w = np.zeros((fan_in, fan_out)) if zero_init else xavier_uniform(rng, fan_in, fan_out)
        self.weight = Param(w)
        self.bias = Param(np.zeros(fan_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.weight.tensor) if x.ndim >= 2 else T.matmul(
            T.reshape(x, (1, -1)), self.weight.tensor).reshape(-1)
        if self.bias is not None:
            y = y + self.bias.tensor
        return y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5, affine: bool = True):
        self.eps = eps
        self.gamma = Param(np.ones(dim)) if affine else None
        self.beta = Param(np.zeros(dim)) if affine else None

    def forward(self, x: Tensor) -> Tensor:
        y = T.layer_norm(x, self.eps)
        if self.gamma is not None:
            y = y * self.gamma.tensor + self.beta.tensor
        return y


def layer_norm(x, eps: float = 1e-5) -> Tensor:
    """Per-row standardisation over the last axis."""
    x = T.as_tensor(x)
    if x.ndim < 1 or x.shape[-1] < 1:
        raise DimensionError("layer_norm needs a non-empty last axis")
    return T.layer_norm(x, eps)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, n, d = x.shape
    x = x.reshape(*lead, n, heads, d // heads)
    return x.swapaxes(-2, -3)


def _merge_heads(x: Tensor) -> Tensor:
    x = x.swapaxes(-2, -3)
    *lead, n, h, dh = x.shape
    return x.reshape(*lead, n, h * dh)


def attention(q, k, v, heads: int = 1, return_weights: bool = False):
    """Multi-head scaled dot-product attention over the last two axes.

    ``q`` is ``[..., n, d]``; ``k`` and ``v`` are ``[..., m, d]`` (leading axes
    broadcast). Projections are the caller's business.
    """
    q, k, v = T.as_tensor(q), T.as_tensor(k), T.as_tensor(v)
    d = q.shape[-1]
    if heads < 1 or d % heads:
        raise DimensionError(f"dim {d} not divisible by {heads} heads")
    if k.shape[-1] != d or v.shape[-1] != d:
        raise DimensionError(f"q/k/v feature dims differ: {q.shape}, {k.shape}, {v.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"key/value token counts differ: {k.shape[-2]} vs {v.shape[-2]}")
    qh, kh, vh = _split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads)
    scores = T.matmul(qh, kh.swapaxes(-1, -2)) * (1.0 / math.sqrt(d // heads))
    w = T.softmax(scores, axis=-1)
    out = _merge_heads(T.matmul(w, vh))
    return (out, w) if return_weights else out


class Attention(Module):
    """Projected multi-head attention; ``context`` defaults to self-attention."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, zero_proj: bool = False):
        self.heads = heads
        self.q = Linear(dim, dim, rng)
        self.k = Linear(dim, dim, rng)
        self.v = Linear(dim, dim, rng)
        self.proj = Linear(dim, dim, rng, zero_init=zero_proj)

    def forward(self, x: Tensor, context: Tensor | None = None) -> Tensor:
        ctx = x if context is None else context
        return self.proj(attention(self.q(x), self.k(ctx), self.v(ctx), self.heads))


class MLP(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator, out_dim: int | None = None):
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, out_dim or dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(T.gelu(self.fc1(x)))


def patchify(frames, patch: int) -> Tensor:
    """``[..., f, H, W, c]`` -> ``[..., f*(H/p)*(W/p), p*p*c]``; token order is (frame, row, col)."""
    x = T.as_tensor(frames)
    *lead, f, H, W, c = x.shape
    if H % patch or W % patch:
        raise DimensionError(f"frame size {H}x{W} not divisible by patch {patch}")
    nl = len(lead)
    x = x.reshape(*lead, f, H // patch, patch, W // patch, patch, c)
    axes = list(range(nl)) + [nl + i for i in (0, 1, 3, 2, 4, 5)]
    x = x.transpose(axes)
    return x.reshape(*lead, f * (H // patch) * (W // patch), patch * patch * c)


def unpatchify(tokens, patch: int, f: int, H: int, W: int, c: int) -> Tensor:
    x = T.as_tensor(tokens)
    lead = x.shape[:-2]
    nl = len(lead)
    x = x.reshape(*lead, f, H // patch, W // patch, patch, patch, c)
    axes = list(range(nl)) + [nl + i for i in (0, 1, 3, 2, 4, 5)]
    x = x.transpose(axes)
    return x.reshape(*lead, f, H, W, c)


def patch_embed(frames, patch: int, weight, bias=None) -> Tensor:
    """Linear embedding of non-overlapping ``patch x patch`` tiles."""
    tokens = patchify(frames, patch)
    out = T.matmul(tokens, T.as_tensor(weight))
    if bias is not None:
        out = out + bias
    return out


class PatchEmbed(Module):
    def __init__(self, channels: int, patch: int, dim: int, rng: np.random.Generator):
        self.patch = patch
        self.proj = Linear(patch * patch * channels, dim, rng)

    def forward(self, frames) -> Tensor:
        return self.proj(patchify(frames, self.patch))


def iter_params(module: Module) -> Iterator[Param]:
    yield from module.named_params().values()
