"""Synthetic ground truth: analytic scenes, ring rigs, depth degradations, datasets.

Scenes are unions of spheres, capsules and boxes with solid (3-D) checker or
stripe textures evaluated in each primitive's rest frame, so colors are
view independent and move with the animated part. Every primitive has a
front and a back palette chosen by the sign of its rest-frame normal along
``front_axis``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ContractError
from .geometry import Camera, DepthMap, intrinsics, look_at
from .io import quantize, read_cameras, read_mask, read_pfm, read_png, write_cameras, write_pfm, write_png
from .splat import warp


# -- scene description ----------------------------------------------------------
@dataclass
class Texture:
    kind: str = "checker"  # "checker" | "stripe" | "solid"
    cell: float = 0.35
    front: list = field(default_factory=lambda: [[0.85, 0.35, 0.2], [0.95, 0.8, 0.3]])
    back: list = field(default_factory=lambda: [[0.2, 0.35, 0.85], [0.3, 0.8, 0.75]])
    front_axis: list = field(default_factory=lambda: [0.0, 0.0, -1.0])


@dataclass
class Animation:
    """Swing ``amplitude_deg * sin(2 pi k / period + phase)`` about ``axis`` through ``pivot``,
    plus a constant per-frame ``velocity``."""
    pivot: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    axis: list = field(default_factory=lambda: [1.0, 0.0, 0.0])
    amplitude_deg: float = 0.0
    period: float = 8.0
    phase: float = 0.0
    velocity: list = field(default_factory=lambda: [0.0, 0.0, 0.0])

    def transform(self, frame: int) -> tuple[np.ndarray, np.ndarray]:
        """Rigid ``(R, t)`` with ``x_world = R x_rest + t`` at ``frame``."""
        angle = np.deg2rad(self.amplitude_deg) * np.sin(2 * np.pi * frame / self.period + self.phase)
        R = rotation(self.axis, angle)
        p = np.asarray(self.pivot, dtype=np.float64)
        t = p - R @ p + np.asarray(self.velocity, dtype=np.float64) * frame
        return R, t


def rotation(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


@dataclass
class Primitive:
    kind: str  # "sphere" | "capsule" | "box"
    params: dict
    texture: Texture = field(default_factory=Texture)
    animation: Animation = field(default_factory=Animation)

    def intersect(self, o: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Nearest positive hit distance along unit rays in the rest frame, ``inf`` on miss."""
        return _INTERSECT[self.kind](self.params, o, d)

    def normal(self, p: np.ndarray) -> np.ndarray:
        return _NORMAL[self.kind](self.params, p)

    def sdf(self, p: np.ndarray) -> np.ndarray:
        return _SDF[self.kind](self.params, p)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params, "texture": asdict(self.texture),
                "animation": asdict(self.animation)}

    @classmethod
    def from_dict(cls, d: dict) -> "Primitive":
        if d["kind"] not in _INTERSECT:
            raise ContractError(f"unknown primitive kind {d['kind']!r}")
        return cls(d["kind"], dict(d["params"]), Texture(**d.get("texture", {})),
                   Animation(**d.get("animation", {})))


@dataclass
class SceneDescription:
    primitives: list
    background: list = field(default_factory=lambda: [0.0, 0.0, 0.0])

    def to_dict(self) -> dict:
        return {"primitives": [p.to_dict() for p in self.primitives], "background": self.background}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneDescription":
        return cls([Primitive.from_dict(p) for p in d["primitives"]], list(d.get("background", [0, 0, 0])))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "SceneDescription":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _dot(a, b):
    return np.einsum("ij,ij->i", a, b)


def _sphere_hit(p, o, d):
    c = np.asarray(p["center"], dtype=np.float64)
    r = float(p["radius"])
    oc = o - c
    b = _dot(oc, d)
    cc = _dot(oc, oc) - r * r
    h = b * b - cc
    t = np.full(len(o), np.inf)
    ok = h >= 0
    sq = np.sqrt(np.where(ok, h, 0.0))
    t0, t1 = -b - sq, -b + sq
    t = np.where(ok & (t0 > 0), t0, np.where(ok & (t1 > 0), t1, t))
    return t


def _sphere_normal(p, x):
    n = x - np.asarray(p["center"], dtype=np.float64)
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def _sphere_sdf(p, x):
    return np.linalg.norm(x - np.asarray(p["center"], dtype=np.float64), axis=1) - float(p["radius"])


def _capsule_hit(p, o, d):
    pa = np.asarray(p["a"], dtype=np.float64)
    pb = np.asarray(p["b"], dtype=np.float64)
    r = float(p["radius"])
    ba = pb - pa
    oa = o - pa
    baba = ba @ ba
    bard = d @ ba
    baoa = oa @ ba
    rdoa = _dot(d, oa)
    oaoa = _dot(oa, oa)
    a = baba - bard * bard
    b = baba * rdoa - baoa * bard
    c = baba * oaoa - baoa * baoa - r * r * baba
    h = b * b - a * c
    t = np.full(len(o), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        tc = (-b - np.sqrt(np.where(h >= 0, h, 0.0))) / a
    y = baoa + tc * bard
    body = (h >= 0) & (a > 1e-12) & (y > 0) & (y < baba) & (tc > 0)
    t[body] = tc[body]
    # hemispherical caps: test both and keep the nearest
    for end in (pa, pb):
        tt = _sphere_hit({"center": end, "radius": r}, o, d)
        t = np.minimum(t, tt)
    return t


def _segment_closest(p, x):
    pa = np.asarray(p["a"], dtype=np.float64)
    pb = np.asarray(p["b"], dtype=np.float64)
    ba = pb - pa
    h = np.clip(((x - pa) @ ba) / (ba @ ba), 0.0, 1.0)
    return pa + h[:, None] * ba


def _capsule_normal(p, x):
    n = x - _segment_closest(p, x)
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def _capsule_sdf(p, x):
    return np.linalg.norm(x - _segment_closest(p, x), axis=1) - float(p["radius"])


def _box_frame(p):
    c = np.asarray(p["center"], dtype=np.float64)
    h = np.asarray(p["half"], dtype=np.float64)
    R = np.asarray(p.get("rotation", np.eye(3).tolist()), dtype=np.float64).reshape(3, 3)
    return c, h, R


def _box_hit(p, o, d):
    c, h, R = _box_frame(p)
    ol = (o - c) @ R
    dl = d @ R
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-h - ol) / dl
        t2 = (h - ol) / dl
    t1 = np.where(np.isnan(t1), -np.inf, t1)
    t2 = np.where(np.isnan(t2), np.inf, t2)
    tn = np.max(np.minimum(t1, t2), axis=1)
    tf = np.min(np.maximum(t1, t2), axis=1)
    hit = (tn <= tf) & (tf > 0)
    return np.where(hit, np.where(tn > 0, tn, tf), np.inf)


def _box_normal(p, x):
    c, h, R = _box_frame(p)
    xl = (x - c) @ R
    k = np.argmax(np.abs(xl) / h, axis=1)
    nl = np.zeros_like(xl)
    nl[np.arange(len(xl)), k] = np.sign(xl[np.arange(len(xl)), k])
    return nl @ R.T


def _box_sdf(p, x):
    c, h, R = _box_frame(p)
    q = np.abs((x - c) @ R) - h
    return np.linalg.norm(np.maximum(q, 0.0), axis=1) + np.minimum(q.max(axis=1), 0.0)


_INTERSECT = {"sphere": _sphere_hit, "capsule": _capsule_hit, "box": _box_hit}
_NORMAL = {"sphere": _sphere_normal, "capsule": _capsule_normal, "box": _box_normal}
_SDF = {"sphere": _sphere_sdf, "capsule": _capsule_sdf, "box": _box_sdf}


def _texture_color(tex: Texture, p_rest: np.ndarray, n_rest: np.ndarray) -> np.ndarray:
    front = n_rest @ np.asarray(tex.front_axis, dtype=np.float64) >= 0
    fp = np.asarray(tex.front, dtype=np.float64)
    bp = np.asarray(tex.back, dtype=np.float64)
    if tex.kind == "solid":
        parity = np.zeros(len(p_rest), dtype=np.int64)
    else:
        cells = np.floor(p_rest / tex.cell).astype(np.int64)
        parity = (cells[:, 1] if tex.kind == "stripe" else cells.sum(axis=1)) % 2
    return np.where(front[:, None], fp[parity], bp[parity])


@dataclass
class RaycastResult:
    rgb: np.ndarray
    depth: DepthMap
    normals: np.ndarray
    primitive: np.ndarray  # index of the hit primitive, -1 for background


def cast_rays(scene: SceneDescription, origins: np.ndarray, dirs: np.ndarray, frame: int = 0):
    """Nearest hit along unit world rays: ``(t, world normal, rgb, primitive id)``."""
    n = len(origins)
    best = np.full(n, np.inf)
    prim = np.full(n, -1, dtype=np.int64)
    normal = np.zeros((n, 3))
    rgb = np.tile(np.asarray(scene.background, dtype=np.float64), (n, 1))
    for i, pr in enumerate(scene.primitives):
        R, t = pr.animation.transform(frame)
        o = (origins - t) @ R
        d = dirs @ R
        tt = pr.intersect(o, d)
        closer = tt < best
        if not closer.any():
            continue
        best[closer] = tt[closer]
        prim[closer] = i
        x_rest = o[closer] + tt[closer, None] * d[closer]
        n_rest = pr.normal(x_rest)
        normal[closer] = n_rest @ R.T
        rgb[closer] = _texture_color(pr.texture, x_rest, n_rest)
    return best, normal, rgb, prim


def raycast(scene: SceneDescription, camera: Camera, frame: int = 0) -> RaycastResult:
    """Analytic RGB, camera-z depth and outward world normals for every pixel."""
    H, W = camera.height, camera.width
    rays = camera.ray_directions().reshape(-1, 3)
    dirs = rays / np.linalg.norm(rays, axis=1, keepdims=True)
    origins = np.broadcast_to(camera.center, dirs.shape)
    t, normal, rgb, prim = cast_rays(scene, origins, dirs, frame)
    hit = np.isfinite(t)
    z = np.where(hit, t * (dirs @ camera.forward), 0.0)
    return RaycastResult(rgb.reshape(H, W, 3), DepthMap(z.reshape(H, W), hit.reshape(H, W)),
                         normal.reshape(H, W, 3), prim.reshape(H, W))


def surface_distance(scene: SceneDescription, points: np.ndarray, frame: int = 0) -> np.ndarray:
    """Unsigned distance from world points to the nearest primitive surface."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    best = np.full(len(pts), np.inf)
    for pr in scene.primitives:
        R, t = pr.animation.transform(frame)
        best = np.minimum(best, np.abs(pr.sdf((pts - t) @ R)))
    return best


# -- stock scenes ----------------------------------------------------------------
_FRONT_PALETTES = [
    [[0.86, 0.33, 0.18], [0.96, 0.80, 0.31]],
    [[0.80, 0.20, 0.45], [0.98, 0.62, 0.62]],
    [[0.90, 0.55, 0.10], [0.55, 0.27, 0.07]],
    [[0.70, 0.85, 0.25], [0.95, 0.95, 0.55]],
]
_BACK_PALETTES = [
    [[0.18, 0.33, 0.86], [0.31, 0.80, 0.76]],
    [[0.35, 0.20, 0.70], [0.62, 0.60, 0.95]],
    [[0.10, 0.45, 0.35], [0.40, 0.75, 0.55]],
    [[0.25, 0.25, 0.30], [0.60, 0.65, 0.75]],
]


def sphere_scene(radius: float = 1.0, cell: float = 0.5) -> SceneDescription:
    return SceneDescription([Primitive("sphere", {"center": [0.0, 0.0, 0.0], "radius": radius},
                                       Texture(cell=cell))])


def performer_scene(seed: int = 0, cell: float = 0.35, animate: bool = True) -> SceneDescription:
    """Capsule-and-sphere stand-in for a person facing -z, with swinging limbs."""
    rng = np.random.default_rng(seed)
    fi, bi = rng.integers(len(_FRONT_PALETTES)), rng.integers(len(_BACK_PALETTES))
    front, back = _FRONT_PALETTES[fi], _BACK_PALETTES[bi]
    body = Texture("checker", cell, front, back)
    limb = Texture("stripe", cell * 0.8, front[::-1], back[::-1])
    head = Texture("solid", cell, [front[1], front[1]], [back[0], back[0]])
    spread = rng.uniform(-0.06, 0.06)
    amp = rng.uniform(12, 25) if animate else 0.0
    phase = rng.uniform(0, 2 * np.pi)
    swing = lambda pivot, sgn: Animation(pivot=pivot, axis=[1, 0, 0], amplitude_deg=amp,
                                         period=8.0, phase=phase + (0 if sgn > 0 else np.pi))
    prims = [
        Primitive("capsule", {"a": [0, -0.1, 0], "b": [0, 0.45, 0], "radius": 0.26}, body),
        Primitive("sphere", {"center": [0, 0.86, 0], "radius": 0.19}, head),
    ]
    for sgn in (-1, 1):
        sh = [sgn * 0.33, 0.45, 0.0]
        prims.append(Primitive("capsule", {"a": sh, "b": [sgn * (0.45 + spread), -0.12, 0.0], "radius": 0.08},
                               limb, swing(sh, sgn)))
        hip = [sgn * 0.12, -0.2, 0.0]
        prims.append(Primitive("capsule", {"a": hip, "b": [sgn * 0.15, -0.9, 0.0], "radius": 0.1},
                               limb, swing(hip, -sgn)))
    return SceneDescription(prims)


# -- rigs --------------------------------------------------------------------------
@dataclass
class RigSpec:
    views: int = 4
    radius: float = 3.0
    height: float = 0.0
    target: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    width: int = 64
    image_height: int = 64
    focal: float | None = None  # pixels; default 1.1 * image height
    start_azimuth: float = 0.0  # degrees


def ring_camera(spec: RigSpec, azimuth_deg: float) -> Camera:
    az = np.deg2rad(azimuth_deg)
    tgt = np.asarray(spec.target, dtype=np.float64)
    eye = tgt + np.array([spec.radius * np.sin(az), spec.height, -spec.radius * np.cos(az)])
    R, t = look_at(eye, tgt)
    f = spec.focal if spec.focal is not None else 1.1 * spec.image_height
    return Camera(intrinsics(f, spec.width, spec.image_height), R, t, spec.width, spec.image_height)


def make_rig(spec: RigSpec) -> list[Camera]:
    """``views`` cameras evenly spaced in azimuth on a ring, all looking at ``target``."""
    if spec.views < 1:
        raise ContractError("rig needs at least one view")
    if spec.radius <= 0:
        raise ContractError("rig radius must be positive")
    return [ring_camera(spec, spec.start_azimuth + 360.0 * k / spec.views) for k in range(spec.views)]


# -- depth degradation -----------------------------------------------------------
@dataclass
class DegradeConfig:
    bias_amplitude: float = 0.03  # fraction of median depth
    bias_wavelength: float = 1.5  # fraction of the larger image side
    bias_waves: int = 3
    noise_sigma: float = 0.002  # fraction of median depth
    floater_band: int = 2  # px from the silhouette
    floater_prob: float = 0.5
    floater_strength: tuple = (0.2, 0.8)  # fraction of the gap to the background
    background_factor: float = 1.6  # background depth = factor * max foreground depth
    relative_scale: tuple = (0.3, 1.5)
    relative_shift: tuple = (0.0, 2.0)
    relative_affine: tuple | None = None  # fixes (a, b) instead of drawing it


def bias_field(shape, rng: np.random.Generator, wavelength_px: float, waves: int,
               mask: np.ndarray | None = None) -> np.ndarray:
    """Smooth field built from random plane waves, zero-mean and unit peak on ``mask``."""
    H, W = shape
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    field_ = np.zeros(shape)
    for _ in range(waves):
        theta = rng.uniform(0, 2 * np.pi)
        lam = wavelength_px * rng.uniform(0.7, 1.3)
        phase = rng.uniform(0, 2 * np.pi)
        field_ += rng.uniform(0.5, 1.0) * np.sin(2 * np.pi * (np.cos(theta) * xx + np.sin(theta) * yy) / lam + phase)
    m = np.ones(shape, dtype=bool) if mask is None or not mask.any() else mask
    field_ -= field_[m].mean()
    peak = np.abs(field_[m]).max()
    return field_ / peak if peak > 0 else field_


def degrade_depth(gt: DepthMap, seed: int, cfg: DegradeConfig | None = None,
                  ) -> tuple[DepthMap, DepthMap]:
    """Simulate an estimator pair: drifting metric depth and affine-ambiguous relative depth.

    ``coarse = gt + bias + noise`` with silhouette pixels pulled toward the
    background; ``relative = a * gt + b`` for hidden ``a > 0``.
    """
    cfg = cfg or DegradeConfig()
    rng = np.random.default_rng(seed)
    m = gt.mask
    d = gt.values.copy()
    med = float(np.median(d[m])) if m.any() else 1.0
    coarse = d.copy()
    if cfg.bias_amplitude:
        coarse += cfg.bias_amplitude * med * bias_field(
            d.shape, rng, cfg.bias_wavelength * max(d.shape), cfg.bias_waves, m)
    if cfg.noise_sigma:
        coarse += rng.normal(0.0, cfg.noise_sigma * med, size=d.shape)
    if cfg.floater_prob and cfg.floater_band > 0 and m.any():
        inner = ndimage.binary_erosion(m, iterations=cfg.floater_band, border_value=0)
        edge = m & ~inner
        pick = edge & (rng.random(d.shape) < cfg.floater_prob)
        bg = cfg.background_factor * d[m].max()
        u = rng.uniform(*cfg.floater_strength, size=d.shape)
        coarse = np.where(pick, coarse + u * (bg - coarse), coarse)
    if cfg.relative_affine is not None:
        a, b = cfg.relative_affine
    else:
        a = rng.uniform(*cfg.relative_scale)
        b = rng.uniform(*cfg.relative_shift)
    if a <= 0:
        raise ContractError("relative depth scale must be positive")
    coarse = np.where(m, coarse, 0.0)
    relative = np.where(m, a * d + b, 0.0)
    return DepthMap(coarse, m.copy()), DepthMap(relative, m.copy())


def estimate_normals(camera: Camera, gt: DepthMap) -> tuple[np.ndarray, np.ndarray]:
    """Stand-in for a learned normal estimator: normals of the true depth."""
    from .geometry import normals_from_depth

    return normals_from_depth(camera, gt)


def count_off_surface(scene: SceneDescription, camera: Camera, depth: DepthMap, frame: int = 0,
                      rel_tol: float = 0.01) -> int:
    """Splats of the unprojected depth lying farther than ``rel_tol * depth`` from any true surface."""
    from .geometry import depth_to_points

    pts = depth_to_points(camera, depth)[depth.mask]
    dist = surface_distance(scene, pts, frame)
    return int(np.count_nonzero(dist > rel_tol * depth.values[depth.mask]))


# -- multi-view samples and datasets ---------------------------------------------
@dataclass
class MVSample:
    """One training / evaluation example. Arrays are ``[f, H, W, ...]`` per stream."""
    ref_frames: np.ndarray
    ref_depth: np.ndarray
    target_frames: np.ndarray  # [m, f, H, W, 3]
    target_depth: np.ndarray  # [m, f, H, W]
    partial: np.ndarray  # [m, f, H, W, 3]
    normal: np.ndarray  # [m, f, H, W, 3]
    cameras: list  # [ref, view_1, ..., view_m]

    @property
    def views(self) -> int:
        return len(self.target_frames)


def render_conditions(ref_frames, ref_depth, src: Camera, targets: list, radius: float = 1.0):
    """Partial RGB and camera-normal renders of every reference frame into every target camera."""
    m, f = len(targets), len(ref_frames)
    H, W = targets[0].height, targets[0].width
    partial = np.zeros((m, f, H, W, 3))
    normal = np.zeros((m, f, H, W, 3))
    for k in range(f):
        dm = DepthMap(ref_depth[k])
        for i, cam in enumerate(targets):
            p, n = warp(ref_frames[k], dm, src, cam, radius)
            partial[i, k] = p.rgb
            normal[i, k] = n.rgb
    return partial, normal


def render_sample(scene: SceneDescription, ref_cam: Camera, targets: list, frames: int,
                  radius: float = 1.0) -> MVSample:
    """Ray-cast GT for every stream and warp the reference into the targets.

    RGB is quantised to 8 bits and depth to float32 first, so conditions can be
    re-derived bit-exactly from files on disk.
    """
    def shoot(cam):
        rgb, dep = [], []
        for k in range(frames):
            r = raycast(scene, cam, k)
            rgb.append(quantize(r.rgb))
            dep.append(r.depth.filled(0.0).astype(np.float32).astype(np.float64))
        return np.stack(rgb), np.stack(dep)

    ref_rgb, ref_dep = shoot(ref_cam)
    tg = [shoot(c) for c in targets]
    partial, normal = render_conditions(ref_rgb, ref_dep, ref_cam, targets, radius)
    return MVSample(ref_rgb, ref_dep, np.stack([t[0] for t in tg]), np.stack([t[1] for t in tg]),
                    quantize(partial), quantize(normal), [ref_cam, *targets])


def build_samples(n_samples: int, rig: RigSpec, frames: int, seed: int = 0,
                  radius: float = 1.0) -> list[MVSample]:
    """In-memory toy dataset: ``n_samples`` randomised performers seen by one rig."""
    ref = ring_camera(rig, 0.0)
    targets = make_rig(rig)
    return [render_sample(performer_scene(seed * 100003 + i), ref, targets, frames, radius)
            for i in range(n_samples)]


def _write_stream(dirpath: Path, frames, depth=None) -> None:
    dirpath.mkdir(parents=True, exist_ok=True)
    for k, img in enumerate(frames):
        write_png(dirpath / f"frame_{k:03d}.png", img)
        if depth is not None:
            write_pfm(dirpath / f"depth_{k:03d}.pfm", depth[k])


def write_sample(sample: MVSample, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_cameras(out / "cameras.json", sample.cameras)
    _write_stream(out / "ref", sample.ref_frames, sample.ref_depth)
    for i in range(sample.views):
        vd = out / f"view_{i + 1}"
        _write_stream(vd, sample.target_frames[i], sample.target_depth[i])
        _write_stream(vd / "partial", sample.partial[i])
        _write_stream(vd / "normal", sample.normal[i])


def emit_dataset(n_samples: int, rig: RigSpec, frames: int, out_dir, seed: int = 0,
                 radius: float = 1.0) -> list[Path]:
    """Write ``n_samples`` sample directories (see :func:`write_sample`) under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, s in enumerate(build_samples(n_samples, rig, frames, seed, radius)):
        p = out / f"sample_{i:03d}"
        write_sample(s, p)
        paths.append(p)
    return paths


def _read_stream(dirpath: Path, with_depth: bool):
    files = sorted(dirpath.glob("frame_*.png"))
    rgb = np.stack([read_png(f) for f in files])
    if not with_depth:
        return rgb, None
    dep = np.stack([read_pfm(dirpath / f.name.replace("frame_", "depth_").replace(".png", ".pfm"))
                    for f in files]).astype(np.float64)
    return rgb, dep


def load_sample(path) -> MVSample:
    path = Path(path)
    cams = read_cameras(path / "cameras.json")
    ref_rgb, ref_dep = _read_stream(path / "ref", True)
    tf, td, pp, nn = [], [], [], []
    for i in range(1, len(cams)):
        vd = path / f"view_{i}"
        rgb, dep = _read_stream(vd, True)
        tf.append(rgb)
        td.append(dep)
        pp.append(_read_stream(vd / "partial", False)[0])
        nn.append(_read_stream(vd / "normal", False)[0])
    return MVSample(ref_rgb, ref_dep, np.stack(tf), np.stack(td), np.stack(pp), np.stack(nn), cams)


def load_dataset(root) -> list[MVSample]:
    dirs = sorted(p for p in Path(root).iterdir() if p.is_dir() and (p / "cameras.json").exists())
    if not dirs:
        raise ContractError(f"no samples found under {root}")
    return [load_sample(d) for d in dirs]


__all__ = [
    "Animation", "DegradeConfig", "MVSample", "Primitive", "RaycastResult", "RigSpec",
    "SceneDescription", "Texture", "build_samples", "cast_rays", "count_off_surface", "degrade_depth", "emit_dataset",
    "estimate_normals", "load_dataset", "load_sample", "make_rig", "performer_scene", "raycast",
    "read_mask", "render_conditions", "render_sample", "ring_camera", "rotation", "sphere_scene",
    "surface_distance", "write_sample",
]
