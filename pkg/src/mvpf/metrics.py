"""Image metrics and a geometry-aware cross-view consistency score."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .depth_refine import depth_rmse
from .errors import DimensionError
from .geometry import Camera, DepthMap, depth_to_points, project_points


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / MSE)``; identical inputs give ``inf``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not peak > 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    win = len(g)
    rows = np.lib.stride_tricks.sliding_window_view(img, win, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, win, axis=1) @ g


def ssim(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5,
         data_range: float = 1.0, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM with a Gaussian window over fully-covered positions.

    Colour images (``[H, W, C]``) average the per-channel scores.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] < window or a.shape[1] < window:
        raise DimensionError(f"images smaller than the {window}px SSIM window")
    if a.ndim == 3:
        return float(np.mean([ssim(a[..., c], b[..., c], window, sigma, data_range, k1, k2)
                              for c in range(a.shape[2])]))
    g = _gaussian_window(window, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a * mu_a
    sbb = _filter_valid(b * b, g) - mu_b * mu_b
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


def covisible_lookup(src: Camera, src_depth: DepthMap, dst: Camera, dst_depth: DepthMap,
                     tol: float = 0.005):
    """Backward correspondence from ``dst`` pixels into ``src`` using true depth.

    A ``dst`` pixel is co-visible when its surface point lands on a valid
    ``src`` pixel whose depth agrees with the point's ``src`` depth within
    ``tol`` (relative). Returns ``(mask [H,W], src flat index [H,W])``.
    """
    pts = depth_to_points(dst, dst_depth).reshape(-1, 3)
    uv, z = project_points(src, pts)
    W, H = src.width, src.height
    with np.errstate(invalid="ignore"):
        ix = np.floor(uv[:, 0])
        iy = np.floor(uv[:, 1])
    inb = dst_depth.mask.ravel() & (z > 0) & (ix >= 0) & (ix < W) & (iy >= 0) & (iy < H)
    ix = np.where(inb, ix, 0).astype(np.int64)
    iy = np.where(inb, iy, 0).astype(np.int64)
    flat = iy * W + ix
    ds = src_depth.values.ravel()[flat]
    ok = inb & src_depth.mask.ravel()[flat] & (np.abs(z - ds) <= tol * ds)
    return ok.reshape(dst.height, dst.width), flat.reshape(dst.height, dst.width)


def cross_view_consistency(frames: np.ndarray, depths: np.ndarray, cameras: list, tol: float = 0.005):
    """Mean absolute RGB disagreement between views on co-visible pixels.

    ``frames`` is ``[m, f, H, W, 3]`` and ``depths`` ``[m, f, H, W]`` (true
    depth per generated view). Each unordered view pair is compared in both
    directions per frame. Returns ``(score or None, skipped_pairs)``; pairs
    with no co-visible pixel are skipped and listed.
    """
    frames = np.asarray(frames, dtype=np.float64)
    m = len(frames)
    if m < 2:
        return None, []
    total, count, skipped = 0.0, 0, []
    for i in range(m):
        for j in range(i + 1, m):
            seen = 0
            for k in range(frames.shape[1]):
                di, dj = DepthMap(depths[i, k]), DepthMap(depths[j, k])
                for s, d, ds_, dd in ((i, j, di, dj), (j, i, dj, di)):
                    mask, flat = covisible_lookup(cameras[s], ds_, cameras[d], dd, tol)
                    if not mask.any():
                        continue
                    src_rgb = frames[s, k].reshape(-1, 3)[flat[mask]]
                    diff = np.abs(frames[d, k][mask] - src_rgb).mean(axis=1)
                    total += float(diff.sum())
                    count += int(mask.sum())
                    seen += int(mask.sum())
            if not seen:
                skipped.append((i, j))
    if count == 0:
        return None, skipped
    return total / count, skipped


@dataclass
class EvalReport:
    psnr: list = field(default_factory=list)
    ssim: list = field(default_factory=list)
    depth_rmse: list = field(default_factory=list)
    cross_view_consistency: float | None = None
    skipped_pairs: list = field(default_factory=list)

    @property
    def mean_psnr(self) -> float | None:
        return float(np.mean(self.psnr)) if self.psnr else None

    @property
    def mean_ssim(self) -> float | None:
        return float(np.mean(self.ssim)) if self.ssim else None

    def to_dict(self) -> dict:
        enc = lambda x: "inf" if isinstance(x, float) and math.isinf(x) else x
        return {
            "per_view": {"psnr_db": [enc(p) for p in self.psnr], "ssim": self.ssim,
                         "depth_rmse": self.depth_rmse},
            "aggregate": {"psnr_db": enc(self.mean_psnr) if self.psnr else None, "ssim": self.mean_ssim,
                          "depth_rmse": float(np.mean(self.depth_rmse)) if self.depth_rmse else None,
                          "cross_view_consistency": self.cross_view_consistency},
            "skipped_pairs": [list(p) for p in self.skipped_pairs],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def check(self, thresholds: dict) -> list[str]:
        """Names of violated thresholds (``psnr_min``, ``ssim_min``, ``consistency_max``, ``depth_rmse_max``)."""
        agg = self.to_dict()["aggregate"]
        fails = []
        rules = {"psnr_min": ("psnr_db", lambda v, t: v == "inf" or v >= t),
                 "ssim_min": ("ssim", lambda v, t: v >= t),
                 "consistency_max": ("cross_view_consistency", lambda v, t: v <= t),
                 "depth_rmse_max": ("depth_rmse", lambda v, t: v <= t)}
        for key, limit in thresholds.items():
            if key not in rules:
                raise KeyError(f"unknown threshold {key!r}")
            name, ok = rules[key]
            value = agg[name]
            if value is None or not ok(value, limit):
                fails.append(key)
        return fails


def evaluate(generated: np.ndarray, gt_frames: np.ndarray, cameras: list,
             gt_depth: np.ndarray | None = None, pred_depth: np.ndarray | None = None,
             peak: float = 1.0) -> EvalReport:
    """Per-view PSNR/SSIM against ground truth plus cross-view consistency.

    Arrays are ``[m, f, H, W, ...]``; per-view scores average over frames.
    """
    rep = EvalReport()
    for v in range(len(generated)):
        rep.psnr.append(float(np.mean([psnr(g, t, peak) for g, t in zip(generated[v], gt_frames[v])])))
        win = min(11, *generated.shape[2:4])
        win -= 1 - win % 2
        rep.ssim.append(float(np.mean([ssim(g, t, window=win, data_range=peak)
                                       for g, t in zip(generated[v], gt_frames[v])])))
        if gt_depth is not None and pred_depth is not None:
            rep.depth_rmse.append(float(np.mean([depth_rmse(DepthMap(p), DepthMap(t))
                                                 for p, t in zip(pred_depth[v], gt_depth[v])])))
    if gt_depth is not None:
        rep.cross_view_consistency, rep.skipped_pairs = cross_view_consistency(generated, gt_depth, cameras)
    return rep
