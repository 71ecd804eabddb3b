"""Independent reference computations shared by several test modules."""
import numpy as np

from mvpf.geometry import Camera, intrinsics, look_at
from mvpf.harness import Primitive, SceneDescription, Texture, raycast


def sphere_capsule_scene(kind: str = "stripe") -> SceneDescription:
    return SceneDescription([
        Primitive("sphere", {"center": [0.0, 0.45, 0.0], "radius": 0.5}, Texture(kind, 0.3)),
        Primitive("capsule", {"a": [0.0, -0.9, 0.0], "b": [0.0, -0.1, 0.0], "radius": 0.3},
                  Texture(kind, 0.3)),
    ])


def ring_view(azimuth_deg: float, size: int, radius: float = 3.0) -> Camera:
    az = np.deg2rad(azimuth_deg)
    R, t = look_at([radius * np.sin(az), 0.0, -radius * np.cos(az)], [0.0, 0.0, 0.0])
    return Camera(intrinsics(1.1 * size, size, size), R, t, size, size)


def covisible_by_depth_test(src_depth: np.ndarray, dst_depth: np.ndarray, src: Camera, dst: Camera,
                            rel_tol: float = 0.005) -> np.ndarray:
    """Destination pixels that pass a ground-truth depth test in the source view.

    Each valid destination pixel is lifted with its true depth, dropped into the
    source pixel it lands in, and kept when the source's true depth there agrees
    to ``rel_tol``. Written pixel by pixel on purpose.
    """
    H, W = dst_depth.shape
    Kd_inv = np.linalg.inv(dst.K)
    out = np.zeros((H, W), dtype=bool)
    for v in range(H):
        for u in range(W):
            z = dst_depth[v, u]
            if not z > 0:
                continue
            x_cam = z * (Kd_inv @ np.array([u + 0.5, v + 0.5, 1.0]))
            X = dst.R.T @ (x_cam - dst.t)
            y = src.R @ X + src.t
            if y[2] <= 0:
                continue
            p = src.K @ (y / y[2])
            i, j = int(np.floor(p[0])), int(np.floor(p[1]))
            if not (0 <= i < src.width and 0 <= j < src.height):
                continue
            zs = src_depth[j, i]
            out[v, u] = zs > 0 and abs(zs - y[2]) <= rel_tol * y[2]
    return out
