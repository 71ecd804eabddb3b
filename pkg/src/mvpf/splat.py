"""Z-buffered square-splat rendering of oriented point clouds.

Both condition images (partial RGB and the camera-dependent normal map) are
resolved from one z-buffer: per pixel the nearest splat wins and equal
depths go to the lowest point index, so results do not depend on ordering.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .geometry import Camera, DepthMap, OrientedPointCloud, project_points, unproject_depth

_EDGE_EPS = 1e-6


@dataclass
class PartialRender:
    rgb: np.ndarray
    mask: np.ndarray
    zbuffer: np.ndarray
    index: np.ndarray  # winning point per pixel, -1 for background


@dataclass
class CameraNormalMap:
    rgb: np.ndarray
    orientation: np.ndarray  # o = n.d per pixel, NaN where nothing was splatted
    mask: np.ndarray
    zbuffer: np.ndarray


def view_dots(normals: np.ndarray, points: np.ndarray, center: np.ndarray) -> np.ndarray:
    to_cam = np.asarray(center, dtype=np.float64) - np.asarray(points, dtype=np.float64)
    dist = np.linalg.norm(to_cam, axis=-1)
    if np.any(dist == 0):
        raise ContractError("point coincides with the camera center; view direction undefined")
    o = np.einsum("...i,...i->...", np.asarray(normals, dtype=np.float64), to_cam) / dist
    return np.clip(o, -1.0, 1.0)


def view_dot(normal, point, camera: Camera) -> float:
    """``o = n . d`` with ``d`` the unit vector from the surface point to the camera center.

    Positive means the surface faces the camera.
    """
    normal = np.asarray(normal, dtype=np.float64)
    if abs(np.linalg.norm(normal) - 1.0) > 1e-6:
        raise ContractError("normal must be unit length")
    return float(view_dots(normal, point, camera.center))


def _splat(cloud: OrientedPointCloud, camera: Camera, radius: float):
    """Resolve the z-buffer. Returns (winner index [H*W], depth [H*W])."""
    H, W = camera.height, camera.width
    winner = np.full(H * W, -1, dtype=np.int64)
    zbuf = np.full(H * W, np.inf)
    if len(cloud) == 0:
        return winner, zbuf
    uv, z = project_points(camera, cloud.positions)
    keep = np.flatnonzero(z > 0)
    uv, z = uv[keep], z[keep]
    base = np.floor(uv).astype(np.int64)
    reach = int(np.ceil(radius)) + 1
    pix_parts, z_parts, id_parts = [], [], []
    for dy in range(-reach, reach + 1):
        for dx in range(-reach, reach + 1):
            px = base[:, 0] + dx
            py = base[:, 1] + dy
            own = (dx == 0) and (dy == 0)
            if own:
                inside = np.ones(len(px), dtype=bool)
            else:
                inside = (np.abs(px + 0.5 - uv[:, 0]) < radius - _EDGE_EPS) & \
                         (np.abs(py + 0.5 - uv[:, 1]) < radius - _EDGE_EPS)
            inside &= (px >= 0) & (px < W) & (py >= 0) & (py < H)
            pix_parts.append(py[inside] * W + px[inside])
            z_parts.append(z[inside])
            id_parts.append(keep[inside])
    pix = np.concatenate(pix_parts)
    zs = np.concatenate(z_parts)
    ids = np.concatenate(id_parts)
    if len(pix) == 0:
        return winner, zbuf
    order = np.lexsort((ids, zs, pix))
    pix, zs, ids = pix[order], zs[order], ids[order]
    first = np.flatnonzero(np.r_[True, pix[1:] != pix[:-1]])
    winner[pix[first]] = ids[first]
    zbuf[pix[first]] = zs[first]
    return winner, zbuf


def render_partial(cloud: OrientedPointCloud, camera: Camera, radius: float = 1.0,
                   bg_color=(0.0, 0.0, 0.0)) -> PartialRender:
    """Splat point colors into ``camera``; each point covers pixel centers within ``radius`` px."""
    H, W = camera.height, camera.width
    winner, zbuf = _splat(cloud, camera, radius)
    mask = winner >= 0
    rgb = np.empty((H * W, 3))
    rgb[:] = np.asarray(bg_color, dtype=np.float64)
    rgb[mask] = cloud.colors[winner[mask]]
    return PartialRender(rgb.reshape(H, W, 3), mask.reshape(H, W), zbuf.reshape(H, W),
                         winner.reshape(H, W))


def normal_colors(normals: np.ndarray, orientation: np.ndarray) -> np.ndarray:
    """``(n + 1) / 2`` for camera-facing points (o >= 0), black otherwise."""
    rgb = (np.asarray(normals) + 1.0) * 0.5
    rgb[~(orientation >= 0)] = 0.0
    return rgb


def render_camera_normal(cloud: OrientedPointCloud, camera: Camera, radius: float = 1.0,
                         partial: PartialRender | None = None) -> CameraNormalMap:
    if partial is None:
        partial = render_partial(cloud, camera, radius)
    H, W = camera.height, camera.width
    mask = partial.mask
    win = partial.index[mask]
    o = np.full((H, W), np.nan)
    rgb = np.zeros((H, W, 3))
    if win.size:
        ow = view_dots(cloud.normals[win], cloud.positions[win], camera.center)
        o[mask] = ow
        rgb[mask] = normal_colors(cloud.normals[win], ow)
    return CameraNormalMap(rgb, o, mask.copy(), partial.zbuffer.copy())


def warp(rgb: np.ndarray, depth: DepthMap, src: Camera, dst: Camera, radius: float = 1.0,
         normals: np.ndarray | None = None, bg_color=(0.0, 0.0, 0.0)):
    """Unproject a source RGB-D frame and re-render it from ``dst``.

    Returns ``(PartialRender, CameraNormalMap)`` sharing one z-buffer.
    """
    cloud = unproject_depth(src, depth, rgb, normals)
    partial = render_partial(cloud, dst, radius, bg_color)
    return partial, render_camera_normal(cloud, dst, radius, partial)
