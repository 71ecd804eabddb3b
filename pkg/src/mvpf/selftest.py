"""Fast built-in checks of hand-verifiable cases, run by ``mvpf selftest``."""
from __future__ import annotations

import math
import tempfile
import traceback
from pathlib import Path

import numpy as np

from . import depth_refine as dr
from . import geometry as geo
from . import harness as hs
from . import metrics, splat
from .denoiser import DenoiserConfig, MultiViewBatch, MultiViewDenoiser, assemble_conditions, latent_shape, toy_decode, toy_encode
from .errors import DegenerateFitError, MVPFError
from .flow import fm_loss, interpolate, FlowSample, sample_euler
from .grad import Tensor, attention, backward, layer_norm, patch_embed
from .grad import tensor as T

CHECKS = []


def check(fn):
    CHECKS.append(fn)
    return fn


def _close(a, b, tol=1e-12):
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), atol=tol, rtol=0)


def _ident_cam(K=None, R=None, t=None, w=8, h=8):
    return geo.Camera(np.eye(3) if K is None else K, np.eye(3) if R is None else R,
                      np.zeros(3) if t is None else t, w, h)


@check
def attention_single_token():
    return _close(attention([[1.0]], [[1.0]], [[1.0]]).data, [[1.0]])


@check
def attention_equal_keys_average():
    return _close(attention([[0.3]], [[1.0], [1.0]], [[0.0], [2.0]]).data, [[1.0]])


@check
def backward_square():
    x = Tensor(3.0, requires_grad=True)
    backward(x * x)
    return _close(x.grad, 6.0)


@check
def backward_linear():
    A = np.ones((2, 2))
    x = Tensor(np.array([0.5, -2.0]), requires_grad=True)
    backward(T.tsum(Tensor(A) @ x.reshape(2, 1)))
    return _close(x.grad, A.sum(axis=0))


@check
def layer_norm_constant_row():
    return _close(layer_norm([1.0, 1.0, 1.0], 1e-5).data, [0, 0, 0])


@check
def layer_norm_standardised_row():
    return _close(layer_norm([-1.0, 1.0], 1e-5).data, [-1, 1], 1e-4)


@check
def patch_embed_single_token():
    out = patch_embed(np.ones((1, 4, 4, 1)), 4, np.ones((16, 3)))
    return out.shape == (1, 3)


@check
def patch_embed_zero_input_gives_bias():
    bias = np.array([0.5, -1.0])
    out = patch_embed(np.zeros((1, 4, 4, 1)), 2, np.ones((4, 2)), Tensor(bias))
    return _close(out.data, np.tile(bias, (4, 1)))


@check
def project_identity_camera():
    uv, z = geo.project(_ident_cam(), [0, 0, 5])
    return _close(uv, [0, 0]) and z == 5


@check
def project_focal_two():
    uv, _ = geo.project(_ident_cam(K=np.diag([2.0, 2.0, 1.0])), [1, 0, 2])
    return _close(uv, [1, 0])


@check
def unproject_identity():
    return _close(geo.unproject_points(_ident_cam(), [[2, 3]], [4]), [[8, 12, 4]])


@check
def unproject_translated():
    cam = _ident_cam(t=np.array([0.0, 0.0, -5.0]))
    return _close(geo.unproject_points(cam, [[0, 0]], [5]), [[0, 0, 10]])


@check
def normals_fronto_parallel_plane():
    cam = geo.Camera(geo.intrinsics(8.0, 8, 8), np.eye(3), np.zeros(3), 8, 8)
    n, valid = geo.normals_from_depth(cam, geo.DepthMap(np.full((8, 8), 3.0)))
    return valid.all() and _close(n[valid], np.tile([0, 0, -1.0], (64, 1)), 1e-12)


@check
def view_dot_cases():
    cam = _ident_cam()
    p = [0, 0, 5]
    return (_close(splat.view_dot([0, 0, -1], p, cam), 1) and _close(splat.view_dot([0, 0, 1], p, cam), -1)
            and _close(splat.view_dot([1, 0, 0], p, cam), 0))


def _cloud(points, colors, normals=None):
    points = np.asarray(points, dtype=float)
    normals = np.tile([0, 0, -1.0], (len(points), 1)) if normals is None else np.asarray(normals, float)
    return geo.OrientedPointCloud(points, np.asarray(colors, float), normals, np.arange(len(points)))


@check
def render_single_point():
    cam = geo.Camera(geo.intrinsics(5.0, 5, 5), np.eye(3), np.zeros(3), 5, 5)
    r = splat.render_partial(_cloud([[0, 0, 2]], [[1, 0, 0]]), cam, radius=0.5)
    return r.mask.sum() == 1 and _close(r.rgb[2, 2], [1, 0, 0]) and r.rgb[~r.mask].max() == 0


@check
def render_z_test():
    cam = geo.Camera(geo.intrinsics(5.0, 5, 5), np.eye(3), np.zeros(3), 5, 5)
    r = splat.render_partial(_cloud([[0, 0, 3], [0, 0, 2]], [[0, 0, 1], [1, 0, 0]]), cam)
    return _close(r.rgb[2, 2], [1, 0, 0])


@check
def normal_map_colors():
    cam = geo.Camera(geo.intrinsics(5.0, 5, 5), np.eye(3), np.zeros(3), 5, 5)
    # normal (0,0,1) faces a camera placed behind the point along +z
    back = geo.Camera(geo.intrinsics(5.0, 5, 5), np.diag([-1.0, 1.0, -1.0]), np.array([0.0, 0.0, 4.0]), 5, 5)
    cloud = _cloud([[0, 0, 2]], [[1, 1, 1]], [[0, 0, 1.0]])
    facing = splat.render_camera_normal(cloud, back, radius=0.5)
    away = splat.render_camera_normal(cloud, cam, radius=0.5)
    return _close(facing.rgb[2, 2], [0.5, 0.5, 1.0]) and _close(away.rgb[2, 2], [0, 0, 0])


@check
def identity_warp():
    cam = geo.Camera(geo.intrinsics(8.0, 8, 8), np.eye(3), np.zeros(3), 8, 8)
    rgb = np.random.default_rng(0).random((8, 8, 3))
    p, _ = splat.warp(rgb, geo.DepthMap(np.full((8, 8), 2.0)), cam, cam)
    return p.mask.all() and np.array_equal(p.rgb, rgb)


@check
def affine_exact():
    fit = dr.align_affine(geo.DepthMap(np.array([[1.0, 2.0, 3.0]])), geo.DepthMap(np.array([[3.0, 5.0, 7.0]])))
    ok = _close([fit.alpha, fit.beta, fit.residual_rms], [2, 1, 0], 1e-12)
    same = dr.align_affine(geo.DepthMap(np.array([[1.0, 2.0, 4.0]])), geo.DepthMap(np.array([[1.0, 2.0, 4.0]])))
    return ok and _close([same.alpha, same.beta], [1, 0], 1e-12)


@check
def affine_degenerate():
    try:
        dr.align_affine(geo.DepthMap(np.full((2, 2), 3.0)), geo.DepthMap(np.arange(1.0, 5.0).reshape(2, 2)))
    except DegenerateFitError:
        return True
    return False


@check
def interpolant_endpoints():
    rng = np.random.default_rng(0)
    x0, x1 = rng.standard_normal(5), rng.standard_normal(5)
    return (np.array_equal(interpolate(x0, x1, 0.0), x0) and np.array_equal(interpolate(x0, x1, 1.0), x1)
            and _close(interpolate(np.zeros(3), np.ones(3), 0.5), np.full(3, 0.5)))


@check
def fm_loss_cases():
    x0, x1 = np.zeros((1, 4)), np.ones((1, 4))
    s = FlowSample(x0, x1, np.array([0.3]))
    oracle = fm_loss(lambda x, c, t: Tensor(x1 - x0), s).item()
    zero = fm_loss(lambda x, c, t: Tensor(np.zeros((1, 4))), s).item()
    return oracle == 0.0 and _close(zero, 1.0)


@check
def euler_cases():
    rng = np.random.default_rng(1)
    x0, x1 = rng.standard_normal(6), rng.standard_normal(6)
    one = sample_euler(lambda x, c, t: x1 - x0, x0, None, 1)
    still = sample_euler(lambda x, c, t: np.zeros_like(x.data), x0, None, 7)
    return _close(one, x1, 1e-12) and np.array_equal(still, x0)


@check
def latent_shapes():
    return (latent_shape(49, 480, 480) == (13, 60, 60) and latent_shape(1, 8, 8) == (1, 1, 1)
            and latent_shape(5, 16, 16) == (2, 2, 2))


@check
def toy_codec_round_trip():
    x = np.random.default_rng(5).random((5, 16, 16, 3))
    return np.array_equal(toy_decode(toy_encode(x)), x) and not toy_encode(np.zeros((5, 16, 16, 3))).any()


@check
def conditions_concatenation_order():
    p = np.random.default_rng(2).random((1, 5, 8, 8, 3))
    z = assemble_conditions(p, np.zeros_like(p))
    C = z.shape[-1] // 2
    return z[..., :C].any() and not z[..., C:].any() and not assemble_conditions(0 * p, 0 * p).any()


@check
def fresh_model_branches_are_identity():
    cfg = DenoiserConfig(frames=5, height=16, width=16, image_channels=1, dim=8, depth=1, heads=2)
    model = MultiViewDenoiser(cfg)
    rng = np.random.default_rng(0)
    fl, h, w, C = cfg.latent
    b = MultiViewBatch(rng.standard_normal((1, 2, fl, h, w, C)), rng.random((1, 2, fl, h, w, 2 * C)),
                       rng.random((1, fl, h, w, C)))
    return np.array_equal(model(b, 0.5).data, model(b, 0.5, use_ref=False, use_sync=False).data)


@check
def lr_schedule_endpoints():
    from .grad.optim import cosine_lr
    return cosine_lr(0, 100) == 1e-4 and _close(cosine_lr(99, 100), 2e-5, 1e-18)


@check
def raycast_unit_sphere():
    cam = hs.ring_camera(hs.RigSpec(width=9, image_height=9), 0.0)
    r = hs.raycast(hs.sphere_scene(), cam)
    n = r.normals[4, 4]
    return _close(r.depth.values[4, 4], 2.0, 1e-9) and _close(n, [0, 0, -1], 1e-9)


@check
def rig_layout():
    cams = hs.make_rig(hs.RigSpec(views=4, radius=3.0))
    centers = np.array([c.center for c in cams])
    ok = _close(np.linalg.norm(centers, axis=1), 3.0, 1e-9)
    return ok and _close(cams[0].forward @ cams[2].forward, -1.0, 1e-9)


@check
def degrade_off_is_identity():
    gt = geo.DepthMap(np.random.default_rng(0).uniform(1, 2, (6, 6)))
    cfg = hs.DegradeConfig(bias_amplitude=0, noise_sigma=0, floater_prob=0, relative_affine=(0.5, 2.0))
    coarse, rel = hs.degrade_depth(gt, 0, cfg)
    fit = dr.align_affine(rel, gt)
    return np.array_equal(coarse.values, gt.values) and _close([fit.alpha, fit.beta], [2, -4], 1e-9)


@check
def psnr_cases():
    a = np.zeros((4, 4))
    return math.isinf(metrics.psnr(a, a)) and _close(metrics.psnr(a, a + 1, 255.0), 20 * math.log10(255), 1e-9)


@check
def ssim_identity_and_symmetry():
    rng = np.random.default_rng(0)
    a, b = rng.random((16, 16)), rng.random((16, 16))
    return metrics.ssim(a, a) == 1.0 and abs(metrics.ssim(a, b) - metrics.ssim(b, a)) < 1e-12


@check
def consistency_single_view_absent():
    return metrics.cross_view_consistency(np.zeros((1, 1, 4, 4, 3)), np.ones((1, 1, 4, 4)), [None])[0] is None


@check
def dataset_layout():
    with tempfile.TemporaryDirectory() as tmp:
        hs.emit_dataset(1, hs.RigSpec(views=2, width=16, image_height=16), 5, tmp)
        root = Path(tmp) / "sample_000"
        names = sorted(p.name for p in root.iterdir())
        return names == ["cameras.json", "ref", "view_1", "view_2"] and all(
            (root / v / c).is_dir() for v in ("view_1", "view_2") for c in ("partial", "normal"))


def run(verbose: bool = True, out=print) -> int:
    """Run every check; returns the number of failures."""
    failures = 0
    for fn in CHECKS:
        try:
            ok = bool(fn())
            detail = ""
        except (MVPFError, Exception) as exc:  # a crash is a failure, not an abort
            ok = False
            detail = f" ({type(exc).__name__}: {exc})"
            if verbose:
                traceback.print_exc()
        failures += not ok
        if verbose:
            out(f"{'ok  ' if ok else 'FAIL'} {fn.__name__}{detail}")
    out(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed")
    return failures
