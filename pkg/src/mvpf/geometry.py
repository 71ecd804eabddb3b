"""Pinhole cameras, depth unprojection and normals from depth.

Extrinsics map world to camera: ``x_cam = R @ x_world + t``. Pixel ``(i, j)``
(column, row) has its center at ``(i + 0.5, j + 0.5)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError


@dataclass
class Camera:
    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=np.float64).reshape(3, 3)
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        self.width = int(self.width)
        self.height = int(self.height)

    def validate(self, tol: float = 1e-9) -> "Camera":
        if not np.allclose(self.R @ self.R.T, np.eye(3), atol=tol) or abs(np.linalg.det(self.R) - 1) > tol:
            raise ContractError("camera rotation is not a proper orthonormal matrix")
        K = self.K
        if np.any(np.abs(np.tril(K, -1)) > 0) or K[0, 0] <= 0 or K[1, 1] <= 0 or K[2, 2] != 1:
            raise ContractError("intrinsics must be upper triangular with positive focal lengths")
        if not np.all(np.isfinite(self.center)):
            raise ContractError("camera center is not finite")
        if self.width < 1 or self.height < 1:
            raise ContractError("image size must be positive")
        return self

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t

    @property
    def forward(self) -> np.ndarray:
        """Optical axis direction in world coordinates."""
        return self.R[2].copy()

    @property
    def K_inv(self) -> np.ndarray:
        return np.linalg.inv(self.K)

    def pixel_grid(self) -> np.ndarray:
        """Homogeneous pixel-center coordinates, shape ``[H, W, 3]``."""
        u, v = np.meshgrid(np.arange(self.width) + 0.5, np.arange(self.height) + 0.5)
        return np.stack([u, v, np.ones_like(u)], axis=-1)

    def ray_directions(self) -> np.ndarray:
        """World-frame rays per pixel scaled so that camera-z equals 1, ``[H, W, 3]``.

        A world point at depth ``d`` along pixel ``p`` is ``center + d * rays[p]``.
        """
        cam = self.pixel_grid() @ self.K_inv.T
        return cam @ self.R

    def to_dict(self) -> dict:
        return {"K": self.K.reshape(-1).tolist(), "R": self.R.reshape(-1).tolist(),
                "t": self.t.tolist(), "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(np.asarray(d["K"]), np.asarray(d["R"]), np.asarray(d["t"]), d["width"], d["height"])


def intrinsics(focal: float, width: int, height: int, cx: float | None = None, cy: float | None = None):
    return np.array([[focal, 0.0, width / 2 if cx is None else cx],
                     [0.0, focal, height / 2 if cy is None else cy],
                     [0.0, 0.0, 1.0]])


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """World->camera ``(R, t)`` for a camera at ``eye`` looking at ``target``.

    Image x runs along ``forward x up`` and image y points opposite to ``up``.
    """
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(x) < 1e-12:
        raise ContractError("look_at up vector is parallel to the viewing direction")
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return R, -R @ eye


@dataclass
class DepthMap:
    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        finite = np.isfinite(self.values) & (self.values > 0)
        self.mask = finite if self.mask is None else np.asarray(self.mask, dtype=bool) & finite

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def filled(self, fill: float = 0.0) -> np.ndarray:
        return np.where(self.mask, self.values, fill)


@dataclass
class OrientedPointCloud:
    positions: np.ndarray
    colors: np.ndarray
    normals: np.ndarray
    pixel_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.positions)

    @classmethod
    def empty(cls) -> "OrientedPointCloud":
        z = np.zeros((0, 3))
        return cls(z, z.copy(), z.copy(), np.zeros(0, dtype=np.int64))


def project_points(camera: Camera, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised projection. Returns ``(uv [N,2], depth [N])``; uv is NaN where depth <= 0."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam = pts @ camera.R.T + camera.t
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        hom = cam @ camera.K.T
        uv = hom[:, :2] / hom[:, 2:3]
    uv[z <= 0] = np.nan
    return uv, z


def project(camera: Camera, point) -> tuple[np.ndarray, float]:
    """Project one world point; a non-positive depth means the point is behind the camera."""
    point = np.asarray(point, dtype=np.float64)
    if np.allclose(point, camera.center, atol=0, rtol=0):
        raise ContractError("cannot project the camera center")
    uv, z = project_points(camera, point[None])
    return uv[0], float(z[0])


def unproject_points(camera: Camera, uv: np.ndarray, depth: np.ndarray) -> np.ndarray:
    """Inverse of :func:`project_points`: ``X = R^T (d K^-1 [u v 1] - t)``."""
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    hom = np.concatenate([uv, np.ones((len(uv), 1))], axis=1)
    cam = (hom @ camera.K_inv.T) * np.asarray(depth, dtype=np.float64).reshape(-1, 1)
    return (cam - camera.t) @ camera.R


def depth_to_points(camera: Camera, depth: DepthMap) -> np.ndarray:
    """World position for every pixel, ``[H, W, 3]`` (garbage where invalid)."""
    _check_size(camera, depth.values.shape)
    d = depth.filled(0.0)
    return camera.center + d[..., None] * camera.ray_directions()


def _check_size(camera: Camera, shape) -> None:
    if tuple(shape[:2]) != (camera.height, camera.width):
        raise DimensionError(
            f"dimension mismatch: image {shape[1]}x{shape[0]} vs camera {camera.width}x{camera.height}")


def difference_stencil(mask: np.ndarray):
    """Neighbour indices used for finite differences on a masked grid.

    Returns flat index arrays ``(xp, xm, yp, ym)`` and a validity mask. Central
    differences are used where both neighbours are valid, otherwise a
    one-sided difference; pixels with no valid neighbour along an axis are invalid.
    """
    H, W = mask.shape
    idx = np.arange(H * W).reshape(H, W)
    m = mask

    def axis(shift_valid_p, shift_valid_m, plus, minus):
        both = m & shift_valid_p & shift_valid_m
        fwd = m & shift_valid_p & ~shift_valid_m
        bwd = m & ~shift_valid_p & shift_valid_m
        p = np.where(both | fwd, plus, idx)
        q = np.where(both | bwd, minus, idx)
        return p, q, both | fwd | bwd

    right = np.zeros_like(m)
    right[:, :-1] = m[:, 1:]
    left = np.zeros_like(m)
    left[:, 1:] = m[:, :-1]
    down = np.zeros_like(m)
    down[:-1] = m[1:]
    up = np.zeros_like(m)
    up[1:] = m[:-1]
    plus_x = np.where(right, idx + 1, idx)
    minus_x = np.where(left, idx - 1, idx)
    plus_y = np.where(down, idx + W, idx)
    minus_y = np.where(up, idx - W, idx)
    xp, xm, okx = axis(right, left, plus_x, minus_x)
    yp, ym, oky = axis(down, up, plus_y, minus_y)
    return xp.ravel(), xm.ravel(), yp.ravel(), ym.ravel(), (okx & oky).ravel()


def normals_from_positions(points: np.ndarray, center: np.ndarray, stencil):
    """Unit normals from a ``[N,3]`` position array and a :func:`difference_stencil`.

    Returns ``(normals, valid, raw_cross, sign)`` so callers can differentiate.
    """
    xp, xm, yp, ym, ok = stencil
    dx = points[xp] - points[xm]
    dy = points[yp] - points[ym]
    raw = np.cross(dx, dy)
    norm = np.linalg.norm(raw, axis=1)
    valid = ok & (norm > 0)
    n = np.zeros_like(raw)
    n[valid] = raw[valid] / norm[valid, None]
    facing = np.einsum("ij,ij->i", n, center - points)
    sign = np.where(facing < 0, -1.0, 1.0)
    return n * sign[:, None], valid, raw, sign


def normals_from_depth(camera: Camera, depth: DepthMap) -> tuple[np.ndarray, np.ndarray]:
    """World-frame unit normals ``[H, W, 3]`` oriented toward the camera, plus a validity mask."""
    pts = depth_to_points(camera, depth).reshape(-1, 3)
    st = difference_stencil(depth.mask)
    n, valid, _, _ = normals_from_positions(pts, camera.center, st)
    H, W = depth.shape
    n[~valid] = 0.0
    return n.reshape(H, W, 3), valid.reshape(H, W)


def unproject_depth(camera: Camera, depth: DepthMap, rgb: np.ndarray,
                    normals: np.ndarray | None = None) -> OrientedPointCloud:
    """One oriented, colored world point per valid depth pixel.

    Normals come from :func:`normals_from_depth` unless given. Pixels whose
    normal cannot be estimated get the unit vector pointing at the camera.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    _check_size(camera, depth.values.shape)
    if rgb.shape[:2] != depth.values.shape:
        raise DimensionError(f"dimension mismatch: rgb {rgb.shape[:2]} vs depth {depth.values.shape}")
    if normals is None:
        normals, nvalid = normals_from_depth(camera, depth)
    else:
        normals = np.asarray(normals, dtype=np.float64)
        nvalid = np.abs(np.linalg.norm(normals, axis=-1) - 1.0) < 1e-6
    pts = depth_to_points(camera, depth)
    sel = depth.mask
    pos = pts[sel]
    nrm = normals[sel].copy()
    bad = ~nvalid[sel]
    if bad.any():
        to_cam = camera.center - pos[bad]
        nrm[bad] = to_cam / np.linalg.norm(to_cam, axis=1, keepdims=True)
    return OrientedPointCloud(pos, rgb[sel][:, :3].copy(), nrm, np.flatnonzero(sel.ravel()))
