"""Two-stage training of the multi-view denoiser and multi-view generation."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .denoiser import DenoiserConfig, MultiViewBatch, MultiViewDenoiser, assemble_conditions, toy_decode, toy_encode
from .errors import ConfigError, ContractError, InsufficientDataError, TrainingError
from .flow import FlowSample, fm_loss, sample_euler
from .geometry import Camera
from .grad import checkpoint
from .grad import tensor as T
from .grad.optim import AdamW, cosine_lr
from .harness import MVSample, RigSpec, build_samples, render_conditions
from .io import quantize


@dataclass
class TrainConfig:
    stage1_steps: int = 2000
    stage2_steps: int = 500
    batch: int = 4
    lr_start: float = 1e-4
    lr_end: float = 2e-5
    stage2_lr_start: float | None = None  # defaults to the stage-1 values
    stage2_lr_end: float | None = None
    weight_decay: float = 0.0
    seed: int = 0
    log_every: int = 0

    def lrs(self, stage: int) -> tuple[float, float]:
        if stage == 2:
            return (self.stage2_lr_start or self.lr_start, self.stage2_lr_end or self.lr_end)
        return self.lr_start, self.lr_end

    def __post_init__(self):
        if self.batch < 1 or self.stage1_steps < 0 or self.stage2_steps < 0:
            raise ConfigError("batch must be >= 1 and step counts >= 0")
        if not all(lr > 0 for lr in self.lrs(1) + self.lrs(2)):
            raise ConfigError("learning rates must be positive")


@dataclass
class LatentSet:
    """Encoded dataset: ``x1 [N, m, f', h, w, C]``, ``cond [N, m, f', h, w, 2C]``, ``ref [N, f', h, w, C]``."""
    x1: np.ndarray
    cond: np.ndarray
    ref: np.ndarray

    def __len__(self) -> int:
        return len(self.x1)

    def batch(self, idx, noise: np.ndarray | None = None) -> MultiViewBatch:
        x = self.x1[idx] if noise is None else noise
        return MultiViewBatch(x, self.cond[idx], self.ref[idx])


def encode_samples(samples: list[MVSample]) -> LatentSet:
    if not samples:
        raise InsufficientDataError("dataset is empty")
    x1 = np.stack([np.stack([toy_encode(v) for v in s.target_frames]) for s in samples])
    cond = np.stack([assemble_conditions(s.partial, s.normal) for s in samples])
    ref = np.stack([toy_encode(s.ref_frames) for s in samples])
    return LatentSet(x1.astype(np.float64), cond, ref.astype(np.float64))


@dataclass
class TrainHistory:
    stage1: list = field(default_factory=list)
    stage2: list = field(default_factory=list)
    initial_loss: float | None = None


def set_stage(model: MultiViewDenoiser, stage: int) -> None:
    """Stage 1: everything except sync attention trains. Stage 2: only sync attention."""
    sync = set(model.sync_param_ids())
    for k, p in model.named_params().items():
        p.trainable = (k not in sync) if stage == 1 else (k in sync)


def evaluate_loss(model: MultiViewDenoiser, data: LatentSet, use_sync: bool, seed: int = 1234,
                  draws: int = 2) -> float:
    """Fixed-noise estimate of the flow-matching loss over the whole set."""
    rng = np.random.default_rng(seed)
    vel = model.velocity(use_sync=use_sync)
    total = 0.0
    with T.no_grad():
        for _ in range(draws):
            for i in range(len(data)):
                idx = np.array([i])
                fs = FlowSample.draw(data.x1[idx], rng)
                total += fm_loss(vel, fs, data.batch(idx)).item()
    return total / (draws * len(data))


def _run_stage(model, data: LatentSet, steps: int, stage: int, cfg: TrainConfig, log) -> list:
    set_stage(model, stage)
    rng = np.random.default_rng([cfg.seed, stage])
    lr0, lr1 = cfg.lrs(stage)
    opt = AdamW(model.params(), lr=lr0, weight_decay=cfg.weight_decay)
    vel = model.velocity(use_sync=(stage == 2))
    losses = []
    for step in range(steps):
        idx = rng.choice(len(data), size=min(cfg.batch, len(data)), replace=False)
        fs = FlowSample.draw(data.x1[idx], rng)
        opt.lr = cosine_lr(step, steps, lr0, lr1)
        model.zero_grad()
        loss = fm_loss(vel, fs, data.batch(idx))
        if not np.isfinite(loss.item()):
            raise TrainingError(f"non-finite loss at stage {stage} step {step}")
        T.backward(loss)
        opt.step()
        losses.append(loss.item())
        if log and cfg.log_every and step % cfg.log_every == 0:
            log(f"stage {stage} step {step} loss {loss.item():.5f} lr {opt.lr:.2e}")
    return losses


def train_two_stage(samples, model_cfg: DenoiserConfig, cfg: TrainConfig, stages=(1, 2),
                    model: MultiViewDenoiser | None = None, log=None):
    """Progressive training; returns ``(model, TrainHistory)``.

    ``samples`` is a list of :class:`MVSample` or an encoded :class:`LatentSet`.
    """
    data = samples if isinstance(samples, LatentSet) else encode_samples(samples)
    if len(data) == 0:
        raise InsufficientDataError("dataset is empty")
    if data.x1.shape[2:] != model_cfg.latent:
        raise ConfigError(f"dataset latents {data.x1.shape[2:]} do not match model {model_cfg.latent}")
    model = model or MultiViewDenoiser(model_cfg)
    hist = TrainHistory()
    for stage in stages:
        if stage not in (1, 2):
            raise ConfigError(f"unknown stage {stage}")
        steps = cfg.stage1_steps if stage == 1 else cfg.stage2_steps
        losses = _run_stage(model, data, steps, stage, cfg, log)
        (hist.stage1 if stage == 1 else hist.stage2).extend(losses)
    for p in model.params():
        p.trainable = True
    return model, hist


def save_model(path, model: MultiViewDenoiser) -> None:
    """Weights go to the checkpoint; the architecture to ``<path>.json`` next to it."""
    path = Path(path)
    checkpoint.save(path, model.state_dict())
    Path(str(path) + ".json").write_text(json.dumps(model.config.to_dict(), indent=1))


def load_model(path) -> MultiViewDenoiser:
    path = Path(path)
    side = Path(str(path) + ".json")
    if not side.exists():
        raise ContractError(f"missing model config {side}")
    cfg = DenoiserConfig.from_dict(json.loads(side.read_text()))
    model = MultiViewDenoiser(cfg)
    model.load_state_dict({k: v.astype(np.float64) for k, v in checkpoint.load(path).items()})
    return model


def generate_multiview(model: MultiViewDenoiser, ref_frames: np.ndarray, ref_depth: np.ndarray,
                       cameras: list[Camera], steps: int = 50, seed: int = 0, radius: float = 1.0,
                       use_sync: bool = True) -> dict:
    """Warp the reference video into every target camera and denoise all views jointly.

    ``cameras`` is ``[ref, target_1, ..., target_m]``. Returns frames
    ``[m, f, H, W, 3]`` plus the condition renders used.
    """
    if len(cameras) < 2:
        raise ContractError("need a reference camera and at least one target camera")
    ref_frames = np.asarray(ref_frames, dtype=np.float64)
    partial, normal = render_conditions(ref_frames, ref_depth, cameras[0], cameras[1:], radius)
    # conditions are stored as 8-bit images, so the model only ever saw quantised renders
    partial, normal = quantize(partial), quantize(normal)
    cond = assemble_conditions(partial, normal)[None]
    ref = toy_encode(ref_frames)[None]
    shape = (1, len(cameras) - 1) + ref.shape[1:]
    x0 = np.random.default_rng(seed).standard_normal(shape)
    batch = MultiViewBatch(x0, cond, ref)
    with T.no_grad():
        x1 = sample_euler(model.velocity(use_sync=use_sync), x0, batch, steps)
    frames = np.stack([toy_decode(v, model.config.image_channels) for v in x1[0]])
    return {"frames": frames, "partial": partial, "normal": normal}


@dataclass
class ToySetup:
    """The desk-scale experiment: small performers, a 4-camera ring, short videos."""
    samples: int = 50
    size: int = 32
    frames: int = 5
    views: int = 4
    data_seed: int = 0
    model: DenoiserConfig = field(default_factory=DenoiserConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        stage1_steps=2000, stage2_steps=5000, batch=4, lr_start=1e-3, lr_end=2e-4,
        stage2_lr_start=3e-3, stage2_lr_end=6e-4))

    def rig(self) -> RigSpec:
        return RigSpec(views=self.views, width=self.size, image_height=self.size)

    def dataset(self) -> list[MVSample]:
        return build_samples(self.samples, self.rig(), self.frames, self.data_seed)
