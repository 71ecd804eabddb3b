"""Run configuration: JSON file plus command-line overrides (flags win)."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .denoiser import DenoiserConfig
from .errors import ConfigError
from .training import ToySetup, TrainConfig


@dataclass
class SplatConfig:
    radius: float = 1.0  # px
    bg_color: tuple = (0.0, 0.0, 0.0)


@dataclass
class RefineConfig:
    lam: float = 0.1
    iters: int = 200
    fit_erosion: int = 2  # px


@dataclass
class SamplerSettings:
    steps: int = 50


@dataclass
class DataConfig:
    samples: int = 50
    size: int = 32  # px
    frames: int = 5
    views: int = 4
    rig_radius: float = 3.0  # scene units


@dataclass
class RunConfig:
    seed: int = 0
    threads: int | None = None
    splat: SplatConfig = field(default_factory=SplatConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    sampler: SamplerSettings = field(default_factory=SamplerSettings)
    data: DataConfig = field(default_factory=DataConfig)
    model: DenoiserConfig = field(default_factory=DenoiserConfig)
    train: TrainConfig = field(default_factory=lambda: ToySetup().train)

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, values: dict, where: str):
    if not isinstance(values, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(f"unknown config keys in {where or 'top level'}: {sorted(unknown)}")
    base = cls()
    kwargs = {}
    for name, f in known.items():
        current = getattr(base, name)
        if name not in values:
            kwargs[name] = current
        elif is_dataclass(current):
            merged = {**asdict(current), **values[name]} if isinstance(values[name], dict) else values[name]
            kwargs[name] = _build(type(current), merged, f"{where}.{name}".strip("."))
        else:
            kwargs[name] = tuple(values[name]) if isinstance(current, tuple) else values[name]
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the JSON file, then ``overrides`` (``{"group.key": value}`` or ``{"key": value}``)."""
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        node = raw
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value
    return _build(RunConfig, raw, "")


def resolve_threads(flag: int | None, cfg: RunConfig | None = None) -> int | None:
    """``--threads`` wins, then the config, then ``MVPF_THREADS``; ``None`` leaves BLAS alone."""
    if flag is not None:
        n = flag
    elif cfg is not None and cfg.threads is not None:
        n = cfg.threads
    elif os.environ.get("MVPF_THREADS"):
        try:
            n = int(os.environ["MVPF_THREADS"])
        except ValueError as exc:
            raise ConfigError("MVPF_THREADS must be an integer") from exc
    else:
        return None
    if n < 1:
        raise ConfigError(f"thread count must be >= 1, got {n}")
    return n
