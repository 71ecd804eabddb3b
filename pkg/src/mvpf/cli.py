"""Command-line entry point: ``mvpf <subcommand> [flags]``.

Exit codes: 0 success, 1 pipeline/contract error (message on stderr),
2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, resolve_threads
from .errors import ContractError, MVPFError


def _color(text: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected r,g,b floats, got {text!r}") from exc
    if len(vals) != 3 or not all(0.0 <= v <= 1.0 for v in vals):
        raise argparse.ArgumentTypeError("colour needs three values in [0, 1]")
    return vals


def _need_file(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise ContractError(f"input file not found: {p}")


def _need_dir(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).is_dir():
            raise ContractError(f"input directory not found: {p}")


# -- subcommands -------------------------------------------------------------------
def cmd_make_scene(args, cfg: RunConfig) -> None:
    from .harness import performer_scene, sphere_scene

    scene = sphere_scene() if args.kind == "sphere" else performer_scene(cfg.seed, animate=not args.static)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    scene.save(args.out)


def cmd_render_gt(args, cfg: RunConfig) -> None:
    from .harness import RigSpec, SceneDescription, make_rig, raycast
    from .io import write_cameras, write_pfm, write_png

    _need_file(args.scene)
    scene = SceneDescription.load(args.scene)
    rig = make_rig(RigSpec(views=args.views, radius=cfg.data.rig_radius, width=args.size, image_height=args.size))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_cameras(out / "cameras.json", rig)
    for i, cam in enumerate(rig):
        vd = out / f"view_{i}"
        vd.mkdir(exist_ok=True)
        for k in range(args.frames):
            r = raycast(scene, cam, k)
            write_png(vd / f"frame_{k:03d}.png", r.rgb)
            write_pfm(vd / f"depth_{k:03d}.pfm", r.depth.filled(0.0))
            write_pfm(vd / f"normal_{k:03d}.pfm", r.normals)
            write_png(vd / f"mask_{k:03d}.png", r.depth.mask)


def cmd_warp(args, cfg: RunConfig) -> None:
    from .geometry import DepthMap
    from .io import read_cameras, read_pfm, read_png, write_pfm, write_png
    from .splat import warp

    _need_file(args.image, args.depth, args.cameras)
    cams = read_cameras(args.cameras)
    for idx in (args.src, args.dst):
        if not 0 <= idx < len(cams):
            raise ContractError(f"camera index {idx} out of range (rig has {len(cams)})")
    rgb = read_png(args.image)
    depth = DepthMap(read_pfm(args.depth).astype(np.float64))
    partial, normal = warp(rgb, depth, cams[args.src], cams[args.dst], cfg.splat.radius,
                           bg_color=cfg.splat.bg_color)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_png(out / "partial.png", partial.rgb)
    write_png(out / "normal.png", normal.rgb)
    write_png(out / "mask.png", partial.mask)
    write_pfm(out / "zbuffer.pfm", np.where(partial.mask, partial.zbuffer, 0.0))


def cmd_refine_depth(args, cfg: RunConfig) -> None:
    from .depth_refine import RefineParams, refine_pipeline
    from .geometry import DepthMap
    from .io import read_cameras, read_pfm, write_pfm

    _need_file(args.relative, args.metric, args.normals, args.cameras)
    cams = read_cameras(args.cameras)
    if not 0 <= args.camera_index < len(cams):
        raise ContractError(f"camera index {args.camera_index} out of range")
    rel = DepthMap(read_pfm(args.relative).astype(np.float64))
    met = DepthMap(read_pfm(args.metric).astype(np.float64))
    normals = read_pfm(args.normals).astype(np.float64)
    if normals.ndim != 3:
        raise ContractError("normal map must be a 3-channel PFM")
    nvalid = np.abs(np.linalg.norm(normals, axis=-1) - 1.0) < 1e-3
    normals = np.where(nvalid[..., None], normals / np.maximum(np.linalg.norm(normals, axis=-1, keepdims=True), 1e-12), 0)
    params = RefineParams(cfg.refine.lam, cfg.refine.iters, fit_erosion=cfg.refine.fit_erosion)
    res = refine_pipeline(rel, met, normals, cams[args.camera_index], params, nvalid)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_pfm(out, res.refined.filled(0.0))
    write_pfm(out.with_name(out.stem + "_aligned.pfm"), res.aligned.filled(0.0))
    out.with_name(out.stem + "_fit.json").write_text(json.dumps(
        {"alpha": res.fit.alpha, "beta": res.fit.beta, "residual_rms": res.fit.residual_rms}, indent=1))


def cmd_emit_dataset(args, cfg: RunConfig) -> None:
    from .harness import RigSpec, emit_dataset

    d = cfg.data
    emit_dataset(d.samples, RigSpec(views=d.views, radius=d.rig_radius, width=d.size, image_height=d.size),
                 d.frames, args.out, seed=cfg.seed, radius=cfg.splat.radius)


def cmd_train(args, cfg: RunConfig, log=print) -> None:
    from .denoiser import DenoiserConfig
    from .harness import load_dataset
    from .training import load_model, save_model, train_two_stage

    _need_dir(args.data)
    _need_file(args.init)
    samples = load_dataset(args.data)
    stages = {"1": (1,), "2": (2,), "both": (1, 2)}[args.stage]
    if args.stage == "2" and args.init is None:
        raise ContractError("stage 2 needs --init with a stage-1 checkpoint")
    if not samples:
        raise ContractError(f"no sample directories under {args.data}")
    model = load_model(args.init) if args.init else None
    if model is not None:
        model_cfg = model.config
    else:
        f, H, W = samples[0].target_frames.shape[1:4]
        model_cfg = DenoiserConfig.from_dict({**cfg.model.to_dict(), "frames": f, "height": H, "width": W})
    model, hist = train_two_stage(samples, model_cfg, cfg.train, stages, model=model, log=log)
    Path(args.ckpt).parent.mkdir(parents=True, exist_ok=True)
    save_model(args.ckpt, model)
    losses = {"stage1": hist.stage1, "stage2": hist.stage2}
    Path(str(args.ckpt) + ".losses.json").write_text(json.dumps(losses))


def cmd_generate(args, cfg: RunConfig) -> None:
    from .harness import load_sample
    from .io import write_png
    from .training import generate_multiview, load_model

    _need_file(args.ckpt)
    _need_dir(args.sample)
    model = load_model(args.ckpt)
    s = load_sample(args.sample)
    views = s.views if args.views is None else args.views
    if not 1 <= views <= s.views:
        raise ContractError(f"--views must be in [1, {s.views}]")
    res = generate_multiview(model, s.ref_frames, s.ref_depth, s.cameras[:views + 1], cfg.sampler.steps,
                             seed=cfg.seed, radius=cfg.splat.radius, use_sync=not args.no_sync)
    out = Path(args.out)
    for i, video in enumerate(res["frames"]):
        vd = out / f"view_{i + 1}"
        vd.mkdir(parents=True, exist_ok=True)
        for k, img in enumerate(video):
            write_png(vd / f"frame_{k:03d}.png", img)


def cmd_eval(args, cfg: RunConfig) -> int:
    from .harness import load_sample
    from .io import read_png
    from .metrics import evaluate

    _need_dir(args.generated, args.sample)
    _need_file(args.thresholds)
    s = load_sample(args.sample)
    gen_dirs = sorted(p for p in Path(args.generated).iterdir() if p.is_dir() and p.name.startswith("view_"))
    if not gen_dirs:
        raise ContractError(f"no view_* directories under {args.generated}")
    gen = []
    for d in gen_dirs:
        frames = sorted(d.glob("frame_*.png"))
        gen.append(np.stack([read_png(f) for f in frames]))
    gen = np.stack(gen)
    m = len(gen)
    if m > s.views or gen.shape[1:] != s.target_frames.shape[1:]:
        raise ContractError(f"dimension mismatch: generated {gen.shape} vs sample {s.target_frames.shape}")
    # images are compared as floats in [0, 1] (peak 1.0, the same dB as peak 255 on 8-bit values)
    rep = evaluate(gen, s.target_frames[:m], s.cameras[1:m + 1], s.target_depth[:m])
    text = rep.to_json()
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    if args.thresholds:
        fails = rep.check(json.loads(Path(args.thresholds).read_text()))
        if fails:
            print(f"thresholds failed: {', '.join(fails)}", file=sys.stderr)
            return 3
    return 0


def cmd_selftest(args, cfg: RunConfig) -> int:
    from . import selftest

    return 1 if selftest.run(verbose=not args.quiet) else 0


# -- parser ------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mvpf", description="Multi-view performer video pipeline (desk scale).")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run config; flags override its values")
    common.add_argument("--seed", type=int, help="random seed for every stochastic step (default 0)")
    common.add_argument("--threads", type=int,
                        help="cap on BLAS worker threads (count); falls back to MVPF_THREADS")
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("make-scene", parents=[common], help="write a procedural scene description (JSON)")
    p.add_argument("--kind", choices=["performer", "sphere"], default="performer", help="scene family")
    p.add_argument("--static", action="store_true", help="disable limb animation")
    p.add_argument("--out", type=Path, required=True, help="output scene JSON path")
    p.set_defaults(fn=cmd_make_scene)

    p = sub.add_parser("render-gt", parents=[common], help="ray-cast ground-truth RGB/depth/normals on a ring rig")
    p.add_argument("--scene", type=Path, required=True, help="scene JSON from make-scene")
    p.add_argument("--views", type=int, default=4, help="cameras on the ring (count)")
    p.add_argument("--size", type=int, default=64, help="image width and height (px)")
    p.add_argument("--frames", type=int, default=1, help="video length (frames)")
    p.add_argument("--rig-radius", type=float, dest="rig_radius", help="ring radius (scene units, default 3)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(fn=cmd_render_gt)

    p = sub.add_parser("warp", parents=[common], help="warp an RGB-D frame into another camera")
    p.add_argument("--image", type=Path, required=True, help="source RGB PNG (8-bit)")
    p.add_argument("--depth", type=Path, required=True, help="source depth PFM (scene units, 0 = invalid)")
    p.add_argument("--cameras", type=Path, required=True, help="camera rig JSON")
    p.add_argument("--src", type=int, default=0, help="source camera index in the rig")
    p.add_argument("--dst", type=int, default=1, help="target camera index in the rig")
    p.add_argument("--splat-radius", type=float, dest="splat_radius", help="splat half-width (px, default 1)")
    p.add_argument("--bg-color", type=_color, dest="bg_color", help="background r,g,b in [0,1] (default 0,0,0)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(fn=cmd_warp)

    p = sub.add_parser("refine-depth", parents=[common], help="affine-align relative depth, then refine with normals")
    p.add_argument("--relative", type=Path, required=True, help="relative depth PFM (affine-ambiguous units)")
    p.add_argument("--metric", type=Path, required=True, help="coarse metric depth PFM (scene units)")
    p.add_argument("--normals", type=Path, required=True, help="target normal map PFM (3-channel, world frame)")
    p.add_argument("--cameras", type=Path, required=True, help="camera rig JSON")
    p.add_argument("--camera-index", type=int, default=0, dest="camera_index", help="camera of the depth maps")
    p.add_argument("--lambda", type=float, dest="lam", help="anchor weight (unitless, default 0.1)")
    p.add_argument("--iters", type=int, help="gradient-descent iterations (count, default 200)")
    p.add_argument("--out", type=Path, required=True, help="refined depth PFM path")
    p.set_defaults(fn=cmd_refine_depth)

    p = sub.add_parser("emit-dataset", parents=[common], help="write the toy multi-view training set")
    p.add_argument("--samples", type=int, help="number of performers (count, default 50)")
    p.add_argument("--size", type=int, help="image width and height (px, default 32)")
    p.add_argument("--frames", type=int, help="frames per video (count, 1 + multiple of 4; default 5)")
    p.add_argument("--views", type=int, help="target cameras (count, default 4)")
    p.add_argument("--splat-radius", type=float, dest="splat_radius", help="splat half-width (px, default 1)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(fn=cmd_emit_dataset)

    p = sub.add_parser("train", parents=[common], help="two-stage training of the denoiser")
    p.add_argument("--data", type=Path, required=True, help="dataset directory from emit-dataset")
    p.add_argument("--stage", choices=["1", "2", "both"], default="both", help="training stage(s) to run")
    p.add_argument("--init", type=Path, help="checkpoint to start from (required for --stage 2)")
    p.add_argument("--ckpt", type=Path, required=True, help="output checkpoint path (.mvpf)")
    p.add_argument("--steps", type=int, help="optimizer steps for each selected stage (count)")
    p.add_argument("--batch", type=int, help="samples per step (count, default 4)")
    p.add_argument("--lr", type=float, help="initial learning rate (per step)")
    p.add_argument("--lr-end", type=float, dest="lr_end", help="final learning rate of the cosine decay")
    p.add_argument("--dim", type=int, help="hidden width (channels, default 64)")
    p.add_argument("--blocks", type=int, help="transformer blocks (count, default 2)")
    p.add_argument("--heads", type=int, help="attention heads (count, default 4)")
    p.set_defaults(fn=cmd_train)

    for name, helptext in (("generate", "synthesize target-view videos for one sample"),
                           ("sample", "alias of generate")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--ckpt", type=Path, required=True, help="trained checkpoint (.mvpf)")
        p.add_argument("--sample", type=Path, required=True, help="sample directory (ref/ and cameras.json)")
        p.add_argument("--views", type=int, help="number of target views to generate (count, default all)")
        p.add_argument("--steps", type=int, help="Euler steps K (count, default 50)")
        p.add_argument("--splat-radius", type=float, dest="splat_radius", help="splat half-width (px, default 1)")
        p.add_argument("--no-sync", action="store_true", dest="no_sync", help="bypass sync attention")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("eval", parents=[common], help="PSNR/SSIM/consistency report for generated views")
    p.add_argument("--generated", type=Path, required=True, help="directory of view_*/frame_*.png")
    p.add_argument("--sample", type=Path, required=True, help="ground-truth sample directory")
    p.add_argument("--thresholds", type=Path, help="JSON {psnr_min (dB), ssim_min, consistency_max, depth_rmse_max}")
    p.add_argument("--out", type=Path, help="report JSON path")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("selftest", parents=[common], help="run the built-in hand-checked cases")
    p.add_argument("--quiet", action="store_true", help="only print the summary line")
    p.set_defaults(fn=cmd_selftest)
    return ap


_OVERRIDES = {
    "seed": "seed", "threads": "threads", "splat_radius": "splat.radius", "bg_color": "splat.bg_color",
    "lam": "refine.lam", "iters": "refine.iters", "samples": "data.samples", "rig_radius": "data.rig_radius",
    "batch": "train.batch", "lr": "train.lr_start", "lr_end": "train.lr_end",
    "dim": "model.dim", "blocks": "model.depth", "heads": "model.heads",
}


def _config_from_args(args) -> RunConfig:
    ov = {key: getattr(args, attr) for attr, key in _OVERRIDES.items() if hasattr(args, attr)}
    if args.command == "emit-dataset":
        ov.update({"data.size": args.size, "data.frames": args.frames, "data.views": args.views})
    if args.command in ("generate", "sample"):
        ov["sampler.steps"] = args.steps
    if args.command == "train":
        if args.steps is not None:
            ov["train.stage1_steps"] = args.steps
            ov["train.stage2_steps"] = args.steps
        if args.lr is not None:
            ov["train.stage2_lr_start"] = args.lr
        if args.lr_end is not None:
            ov["train.stage2_lr_end"] = args.lr_end
    cfg = load_config(args.config, ov)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        threads = resolve_threads(args.threads, cfg)
        if threads is not None:
            from threadpoolctl import threadpool_limits
            ctx = threadpool_limits(limits=threads)
        else:
            ctx = nullcontext()
        with ctx:
            rc = args.fn(args, cfg)
        return int(rc or 0)
    except MVPFError as exc:
        print(f"mvpf {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
