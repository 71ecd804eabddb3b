"""Inference-time depth repair.

Relative depth (sharp but affine-ambiguous) is first fitted to coarse metric
depth by closed-form least squares, then nudged so that its finite-difference
normals agree with an estimated normal map while staying anchored to the
aligned values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ContractError, DegenerateFitError, DimensionError, DivergenceError, InsufficientDataError
from .geometry import Camera, DepthMap, difference_stencil


@dataclass
class AffineFit:
    alpha: float
    beta: float
    residual_rms: float

    def apply(self, depth: DepthMap) -> DepthMap:
        return DepthMap(np.where(depth.mask, self.alpha * depth.values + self.beta, 0.0), depth.mask.copy())


def align_affine(relative: DepthMap, metric: DepthMap, mask: np.ndarray | None = None) -> AffineFit:
    """Least-squares ``(alpha, beta)`` minimising ``||alpha * rel + beta - metric||`` on ``mask``.

    ``alpha = cov(rel, metric) / var(rel)``, ``beta = mean(metric) - alpha * mean(rel)``.
    """
    if relative.shape != metric.shape:
        raise DimensionError(f"dimension mismatch: {relative.shape} vs {metric.shape}")
    m = relative.mask & metric.mask
    if mask is not None:
        m &= np.asarray(mask, dtype=bool)
    n = int(m.sum())
    if n < 2:
        raise InsufficientDataError(f"affine fit needs at least 2 pixels, mask has {n}")
    x = relative.values[m].astype(np.float64)
    y = metric.values[m].astype(np.float64)
    mx, my = x.mean(), y.mean()
    xc, yc = x - mx, y - my
    var = np.sum(xc * xc)
    if not var > 1e-300 or var <= 1e-24 * np.sum(x * x):
        raise DegenerateFitError("relative depth is constant on the mask; scale is undetermined")
    alpha = float(np.sum(xc * yc) / var)
    beta = float(my - alpha * mx)
    r = alpha * x + beta - y
    return AffineFit(alpha, beta, float(np.sqrt(np.mean(r * r))))


class NormalEnergy:
    """``E(D) = sum(1 - n(D) . n_target) + lam * sum((D - D_anchor)^2)`` and its gradient.

    ``n(D)`` are the finite-difference normals of the unprojected depth, as in
    :func:`mvpf.geometry.normals_from_depth`.
    """

    def __init__(self, camera: Camera, anchor: DepthMap, target_normals: np.ndarray,
                 lam: float, target_valid: np.ndarray | None = None):
        if not lam > 0:
            raise ContractError(f"lambda must be positive, got {lam}")
        if anchor.shape != (camera.height, camera.width) or target_normals.shape[:2] != anchor.shape:
            raise DimensionError("dimension mismatch between depth, normals and camera")
        self.lam = float(lam)
        self.mask = anchor.mask.ravel()
        self.anchor = anchor.filled(0.0).ravel()
        self.rays = camera.ray_directions().reshape(-1, 3)
        self.center = camera.center
        self.stencil = difference_stencil(anchor.mask)
        tn = np.asarray(target_normals, dtype=np.float64).reshape(-1, 3)
        ok = self.stencil[4] & self.mask
        if target_valid is not None:
            ok &= np.asarray(target_valid, dtype=bool).ravel()
        ok &= np.abs(np.linalg.norm(tn, axis=1) - 1.0) < 1e-6
        self.active = np.flatnonzero(ok)
        self.target = tn[self.active]

    def _normals(self, d: np.ndarray):
        pts = self.center + d[:, None] * self.rays
        xp, xm, yp, ym, _ = (s[self.active] for s in self.stencil)
        dx = pts[xp] - pts[xm]
        dy = pts[yp] - pts[ym]
        raw = np.cross(dx, dy)
        norm = np.linalg.norm(raw, axis=1)
        u = raw / norm[:, None]
        sign = np.where(np.einsum("ij,ij->i", u, self.center - pts[self.active]) < 0, -1.0, 1.0)
        return dx, dy, u, norm, sign

    def value(self, d: np.ndarray) -> float:
        if np.any(d[self.mask] <= 0):
            return np.inf
        _, _, u, norm, sign = self._normals(d)
        if np.any(norm == 0):
            return np.inf
        cos = sign * np.einsum("ij,ij->i", u, self.target)
        diff = (d - self.anchor)[self.mask]
        return float(np.sum(1.0 - cos) + self.lam * np.sum(diff * diff))

    def gradient(self, d: np.ndarray) -> np.ndarray:
        dx, dy, u, norm, sign = self._normals(d)
        cos_u = np.einsum("ij,ij->i", u, self.target)
        # d(1 - s u.t)/d raw = -s (t - (u.t) u) / |raw|
        g = -(sign / norm)[:, None] * (self.target - cos_u[:, None] * u)
        gdx = np.cross(dy, g)
        gdy = np.cross(g, dx)
        xp, xm, yp, ym, _ = (s[self.active] for s in self.stencil)
        out = np.zeros_like(d)
        r = self.rays
        np.add.at(out, xp, np.einsum("ij,ij->i", gdx, r[xp]))
        np.add.at(out, xm, -np.einsum("ij,ij->i", gdx, r[xm]))
        np.add.at(out, yp, np.einsum("ij,ij->i", gdy, r[yp]))
        np.add.at(out, ym, -np.einsum("ij,ij->i", gdy, r[ym]))
        out += 2.0 * self.lam * (d - self.anchor)
        out[~self.mask] = 0.0
        return out


def refine_with_normals(aligned: DepthMap, target_normals: np.ndarray, camera: Camera,
                        lam: float = 0.1, iters: int = 200, target_valid: np.ndarray | None = None,
                        armijo: float = 1e-4, step: float = 1e-3,
                        history: list | None = None) -> DepthMap:
    """Gradient descent with Armijo backtracking on :class:`NormalEnergy`.

    Only steps that satisfy the sufficient-decrease test are accepted, so the
    energy never increases. Appends the energy after each accepted step to
    ``history`` when given.
    """
    energy = NormalEnergy(camera, aligned, target_normals, lam, target_valid)
    d = aligned.filled(0.0).ravel().copy()
    e = energy.value(d)
    if not np.isfinite(e):
        raise DivergenceError("initial refinement energy is not finite")
    if history is not None:
        history.append(e)
    for it in range(iters):
        g = energy.gradient(d)
        gg = float(g @ g)
        if not np.isfinite(gg):
            raise DivergenceError(f"non-finite gradient at iteration {it}")
        if gg == 0.0:
            break
        step *= 2.0
        while True:
            cand = d - step * g
            ec = energy.value(cand)
            if ec <= e - armijo * step * gg:
                break
            step *= 0.5
            if step < 1e-30:
                break
        if step < 1e-30:
            break
        d, e = cand, ec
        if history is not None:
            history.append(e)
    return DepthMap(d.reshape(aligned.shape), aligned.mask.copy())


@dataclass
class RefineParams:
    lam: float = 0.1
    iters: int = 200
    armijo: float = 1e-4
    fit_erosion: int = 2  # px of silhouette excluded from the affine fit


@dataclass
class RefineOutput:
    fit: AffineFit
    aligned: DepthMap
    refined: DepthMap


def refine_pipeline(relative: DepthMap, metric: DepthMap, normals: np.ndarray, camera: Camera,
                    params: RefineParams | None = None, normals_valid: np.ndarray | None = None,
                    mask: np.ndarray | None = None) -> RefineOutput:
    """Affine alignment followed by normal-guided refinement; keeps both stages.

    The fit ignores a ``fit_erosion``-pixel band along the silhouette, where
    metric estimators smear depth toward the background.
    """
    params = params or RefineParams()
    valid = relative.mask & metric.mask
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool)
    fit_mask = valid
    if params.fit_erosion > 0:
        eroded = ndimage.binary_erosion(valid, iterations=params.fit_erosion, border_value=0)
        if eroded.sum() >= 2:
            fit_mask = eroded
    fit = align_affine(relative, metric, fit_mask)
    aligned = fit.apply(relative)
    if mask is not None:
        aligned = DepthMap(aligned.values, aligned.mask & np.asarray(mask, dtype=bool))
    refined = refine_with_normals(aligned, normals, camera, params.lam, params.iters,
                                  normals_valid, params.armijo)
    return RefineOutput(fit, aligned, refined)


def depth_rmse(a: DepthMap, b: DepthMap, mask: np.ndarray | None = None) -> float:
    m = a.mask & b.mask
    if mask is not None:
        m &= mask
    diff = a.values[m] - b.values[m]
    return float(np.sqrt(np.mean(diff * diff)))
