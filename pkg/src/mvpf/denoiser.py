"""Toy multi-view video velocity model.

Each target view is a stack of latent frames. Per block, tokens of one view
attend to each other (spatio-temporal self-attention), then to the clean
reference-video tokens (ref attention), then, frame by frame, to the tokens
of every view including the reference (sync attention), then pass an MLP.
Ref and sync projections start at zero, so a fresh model behaves as if
both branches were absent. No camera or view embedding is used: viewpoint
enters only through the partial-render and normal-map conditions.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, ModelError
from .grad import tensor as T
from .grad.nn import Attention, LayerNorm, Linear, MLP, Module, Param, attention, patchify, unpatchify
from .grad.tensor import Tensor

TEMPORAL_STRIDE = 4
SPATIAL_STRIDE = 8


def latent_shape(f: int, H: int, W: int) -> tuple[int, int, int]:
    """``(1 + (f-1)/4, H/8, W/8)``: the first frame gets a latent frame of its own."""
    if f < 1 or (f - 1) % TEMPORAL_STRIDE:
        raise ConfigError(f"frame count {f} must be 1 + a multiple of {TEMPORAL_STRIDE}")
    if H < 1 or W < 1 or H % SPATIAL_STRIDE or W % SPATIAL_STRIDE:
        raise ConfigError(f"image size {H}x{W} must be a positive multiple of {SPATIAL_STRIDE}")
    return 1 + (f - 1) // TEMPORAL_STRIDE, H // SPATIAL_STRIDE, W // SPATIAL_STRIDE


def latent_channels(c: int) -> int:
    return TEMPORAL_STRIDE * SPATIAL_STRIDE * SPATIAL_STRIDE * c


def toy_encode(frames: np.ndarray) -> np.ndarray:
    """Invertible space/time-to-depth rearrangement ``[f,H,W,c] -> [f',H/8,W/8,256c]``.

    Three zero frames are prepended so the first frame fills one latent
    frame with the padding, then every 4 frames x 8 x 8 pixels become one
    latent vector (ordered time, row, column, channel).
    """
    x = np.asarray(frames)
    if x.ndim != 4:
        raise DimensionError(f"expected [f, H, W, c] frames, got shape {x.shape}")
    f, H, W, c = x.shape
    fl, h, w = latent_shape(f, H, W)
    pad = np.zeros((TEMPORAL_STRIDE - 1, H, W, c), dtype=x.dtype)
    x = np.concatenate([pad, x], axis=0)
    x = x.reshape(fl, TEMPORAL_STRIDE, h, SPATIAL_STRIDE, w, SPATIAL_STRIDE, c)
    return x.transpose(0, 2, 4, 1, 3, 5, 6).reshape(fl, h, w, latent_channels(c))


def toy_decode(latents: np.ndarray, channels: int = 3) -> np.ndarray:
    z = np.asarray(latents)
    if z.ndim != 4 or z.shape[-1] != latent_channels(channels):
        raise DimensionError(f"expected [f', h, w, {latent_channels(channels)}] latents, got {z.shape}")
    fl, h, w, _ = z.shape
    x = z.reshape(fl, h, w, TEMPORAL_STRIDE, SPATIAL_STRIDE, SPATIAL_STRIDE, channels)
    x = x.transpose(0, 3, 1, 4, 2, 5, 6).reshape(fl * TEMPORAL_STRIDE, h * SPATIAL_STRIDE,
                                                  w * SPATIAL_STRIDE, channels)
    return x[TEMPORAL_STRIDE - 1:]


def assemble_conditions(partial: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Encode partial renders and normal maps separately, concatenate on channels.

    Inputs are ``[..., f, H, W, c]`` (leading view/batch axes allowed); the
    first ``C`` output channels hold the partial render, the last ``C`` the
    normal map.
    """
    partial = np.asarray(partial, dtype=np.float64)
    normal = np.asarray(normal, dtype=np.float64)
    if partial.shape != normal.shape:
        raise DimensionError(f"dimension mismatch: partial {partial.shape} vs normal {normal.shape}")
    lead = partial.shape[:-4]
    p = partial.reshape((-1,) + partial.shape[-4:])
    n = normal.reshape((-1,) + normal.shape[-4:])
    zp = np.stack([toy_encode(v) for v in p])
    zn = np.stack([toy_encode(v) for v in n])
    z = np.concatenate([zp, zn], axis=-1)
    return z.reshape(lead + z.shape[1:])


@dataclass
class DenoiserConfig:
    frames: int = 5
    height: int = 32
    width: int = 32
    image_channels: int = 3
    dim: int = 64
    depth: int = 2
    heads: int = 4
    patch: int = 1
    mlp_ratio: int = 2
    seed: int = 0

    def __post_init__(self):
        fl, h, w = latent_shape(self.frames, self.height, self.width)
        if self.dim % self.heads:
            raise ConfigError(f"dim {self.dim} not divisible by {self.heads} heads")
        if h % self.patch or w % self.patch:
            raise ConfigError(f"latent grid {h}x{w} not divisible by patch {self.patch}")
        if self.depth < 1 or self.dim < 1:
            raise ConfigError("depth and dim must be positive")

    @property
    def latent(self) -> tuple[int, int, int, int]:
        return latent_shape(self.frames, self.height, self.width) + (latent_channels(self.image_channels),)

    @property
    def tokens_per_frame(self) -> int:
        _, h, w, _ = self.latent
        return (h // self.patch) * (w // self.patch)

    @property
    def token_features(self) -> int:
        return self.patch * self.patch * self.latent[3]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown denoiser config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class MultiViewBatch:
    """Latents for ``B`` samples of ``m`` target views each.

    ``noise``: ``[B, m, f', h, w, C]`` (the current state x_t);
    ``cond``: ``[B, m, f', h, w, 2C]``; ``ref``: ``[B, f', h, w, C]``.
    Latent frame ``k`` of every stream shows the same instant.
    """
    noise: np.ndarray
    cond: np.ndarray
    ref: np.ndarray
    frame_index: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.noise.ndim != 6:
            raise DimensionError(f"noise latents must be [B, m, f', h, w, C], got {self.noise.shape}")
        B, m, fl, h, w, C = self.noise.shape
        if self.cond.shape != (B, m, fl, h, w, 2 * C):
            raise DimensionError(f"condition latents {self.cond.shape} do not match noise {self.noise.shape}")
        if self.ref.shape != (B, fl, h, w, C):
            raise DimensionError(f"reference latents {self.ref.shape} do not match noise {self.noise.shape}")
        if self.frame_index is None:
            self.frame_index = np.arange(fl)

    @property
    def views(self) -> int:
        return self.noise.shape[1]

    @property
    def latent_frames(self) -> int:
        return self.noise.shape[2]

    def with_noise(self, noise: np.ndarray) -> "MultiViewBatch":
        return MultiViewBatch(noise, self.cond, self.ref, self.frame_index)


def sinusoidal(values: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """``[..., dim]`` cos/sin features of ``values``."""
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / max(half, 1))
    arg = np.asarray(values, dtype=np.float64)[..., None] * freqs
    emb = np.concatenate([np.cos(arg), np.sin(arg)], axis=-1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros(emb.shape[:-1] + (1,))], axis=-1)
    return emb


def ref_attention_block(z_in, z_ref, attn: Attention, norm: LayerNorm | None = None) -> Tensor:
    """``Z_in + proj(cross_attn(queries=Z_in, keys/values=Z_ref))``.

    ``z_in`` is ``[..., n, d]`` and ``z_ref`` ``[..., r, d]``; ``norm`` (if
    given) is applied to the queries only.
    """
    z_in, z_ref = T.as_tensor(z_in), T.as_tensor(z_ref)
    if z_ref.shape[-1] != z_in.shape[-1]:
        raise DimensionError(f"reference token dim {z_ref.shape[-1]} != block dim {z_in.shape[-1]}")
    q = norm(z_in) if norm is not None else z_in
    return z_in + attn(q, context=z_ref)


def sync_attention_block(views: list, attn: Attention, norm: LayerNorm | None = None) -> list:
    """Per-latent-frame self-attention over the tokens of all views.

    ``views`` is a list of ``[..., f', n, d]`` tensors (reference first by
    convention). Tokens of frame ``k`` only see frame ``k`` of every view.
    Returns ``Z + proj(attn(concat))`` for every view.
    """
    views = [T.as_tensor(v) for v in views]
    shape = views[0].shape
    for v in views[1:]:
        if v.shape[-3:] != shape[-3:]:
            raise DimensionError(f"view token grids differ: {v.shape} vs {shape}")
    n = shape[-2]
    lead = np.broadcast_shapes(*(v.shape[:-3] for v in views))
    views = [v if v.shape[:-3] == lead else v + np.zeros(lead + v.shape[-3:]) for v in views]
    joint = T.concat(views, axis=-2)  # [..., f', m*n, d]
    x = norm(joint) if norm is not None else joint
    upd = joint + attn(x)
    return [upd[..., i * n:(i + 1) * n, :] for i in range(len(views))]


class DiTBlock(Module):
    def __init__(self, dim: int, heads: int, mlp_ratio: int, rng: np.random.Generator):
        self.heads = heads
        self.norm1 = LayerNorm(dim)
        self.self_attn = Attention(dim, heads, rng)
        self.ref_norm = LayerNorm(dim)
        self.ref_attn = Attention(dim, heads, rng, zero_proj=True)
        self.sync_norm = LayerNorm(dim)
        self.sync_attn = Attention(dim, heads, rng, zero_proj=True)
        self.norm2 = LayerNorm(dim)
        self.mlp = MLP(dim, mlp_ratio * dim, rng)

    def forward(self, z: Tensor, ref: Tensor, fl: int, use_ref: bool = True,
                use_sync: bool = True) -> Tensor:
        """``z``: ``[B, m, f'*n, d]``; ``ref``: ``[B, f'*n, d]`` clean reference tokens."""
        B, m, L, d = z.shape
        z = z + self.self_attn(self.norm1(z))
        if use_ref:
            z = ref_attention_block(z, ref.reshape(B, 1, L, d), self.ref_attn, self.ref_norm)
        if use_sync:
            n = L // fl
            parts = [ref.reshape(B, fl, n, d)] + [z[:, i].reshape(B, fl, n, d) for i in range(m)]
            out = sync_attention_block(parts, self.sync_attn, self.sync_norm)
            z = T.stack([o.reshape(B, L, d) for o in out[1:]], axis=1)
        return z + self.mlp(self.norm2(z))


class MultiViewDenoiser(Module):
    """Velocity model ``v(x_t, cond, t)`` over all target views jointly."""

    def __init__(self, config: DenoiserConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        cfg = config
        d, feat = cfg.dim, cfg.token_features
        self.embed = Linear(3 * feat, d, rng)
        self.ref_embed = Linear(feat, d, rng)
        self.t_fc1 = Linear(d, d, rng)
        self.t_fc2 = Linear(d, d, rng)
        self.blocks = [DiTBlock(d, cfg.heads, cfg.mlp_ratio, rng) for _ in range(cfg.depth)]
        self.out_norm = LayerNorm(d, affine=False)
        self.out_mod = Linear(d, 2 * d, rng, zero_init=True)
        self.head = Linear(d, feat, rng, zero_init=True)
        # per-channel, time-dependent linear paths from the state and the conditions
        self.skip = Linear(d, 3 * feat, rng, zero_init=True)
        fl = cfg.latent[0]
        self.pos = sinusoidal(np.arange(fl * cfg.tokens_per_frame), d)

    def sync_param_ids(self) -> list[str]:
        return [k for k in self.named_params() if ".sync_" in k]

    def time_embedding(self, t: np.ndarray) -> Tensor:
        s = Tensor(sinusoidal(np.asarray(t, dtype=np.float64) * 1000.0, self.config.dim))
        return self.t_fc2(T.silu(self.t_fc1(s)))

    def _tokens(self, lat: np.ndarray) -> np.ndarray:
        return patchify(lat, self.config.patch).data

    def forward(self, batch: MultiViewBatch, t, use_ref: bool = True, use_sync: bool = True) -> Tensor:
        cfg = self.config
        noise = batch.noise.data if isinstance(batch.noise, Tensor) else batch.noise
        B, m, fl, h, w, C = noise.shape
        if (fl, h, w, C) != cfg.latent:
            raise DimensionError(f"latent shape {(fl, h, w, C)} does not match config {cfg.latent}")
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (B,))
        xt = self._tokens(noise)  # [B, m, L, feat]
        feat = xt.shape[-1]
        L = xt.shape[2]
        # per token: (state, partial render, normal map) features
        cond = np.concatenate([self._tokens(batch.cond[..., :C]), self._tokens(batch.cond[..., C:])], axis=-1)
        inp = Tensor(np.concatenate([xt, cond], axis=-1))
        temb = self.time_embedding(t)  # [B, d]
        z = self.embed(inp) + self.pos + temb.reshape(B, 1, 1, cfg.dim)
        ref = self.ref_embed(Tensor(self._tokens(batch.ref))) + self.pos
        for i, blk in enumerate(self.blocks):
            z = blk(z, ref, fl, use_ref, use_sync)
            if not np.all(np.isfinite(z.data)):
                raise ModelError(f"non-finite activations after block {i}")
        mod = self.out_mod(T.silu(temb)).reshape(B, 1, 1, 2 * cfg.dim)
        shift, scale = mod[..., :cfg.dim], mod[..., cfg.dim:]
        h_out = self.head(self.out_norm(z) * (scale + 1.0) + shift)
        gates = self.skip(T.silu(temb)).reshape(B, 1, 1, 3 * feat)
        direct = (gates * inp.data).reshape(B, m, L, 3, feat).sum(axis=3)
        out = h_out + direct
        if not np.all(np.isfinite(out.data)):
            raise ModelError("non-finite activations in output head")
        return unpatchify(out, cfg.patch, fl, h, w, C)

    def velocity(self, use_ref: bool = True, use_sync: bool = True):
        """``(x, batch, t) -> v`` callable for :mod:`mvpf.flow`."""
        def fn(x, batch: MultiViewBatch, t):
            x = x.data if isinstance(x, Tensor) else x
            return self(batch.with_noise(x), t, use_ref, use_sync)
        return fn


def denoiser_forward(model: MultiViewDenoiser, batch: MultiViewBatch, t, use_ref: bool = True,
                     use_sync: bool = True) -> Tensor:
    return model(batch, t, use_ref, use_sync)
