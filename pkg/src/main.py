# src/main.py
"""
scenekit command line: synth -> assemble -> render / css-fit -> evaluate.

Exit codes: 0 success, 1 internal invariant or file-system failure, 2 bad input
or config.
"""
from __future__ import annotations

import functools
import json
import re
from pathlib import Path
from typing import Optional

import click
import numpy as np

from .assemble.run import run_assemble
from .depth.canonical import depth_loss, to_canonical_inverse
from .depth.metrics import depth_eval_mask, eval_depth
from .eval3d.report import evaluate_scene, read_prediction, report_table
from .geometry.sim3 import Sim3
from .gaussians.primitives import offset_regularizer
from .mapio.bundle import OFFSET, read_bundle, read_ground_truth, read_nocs_binned
from .mapio.ply import export_gaussians_ply, import_gaussians_ply
from .nocs.codec import nocs_loss
from .objectives.losses import camera_fov_loss, combine, losses_from_mapping
from .oracle.raycast import raycast_maps
from .oracle.renders import canonical_gt_renders, primitive_from_gt, write_oracle
from .oracle.scene import SHAPES, PrimitiveObject, generate_scene
from .semantics.metrics import semantics_loss
from .splat.css import css_fit, random_init
from .splat.rasterizer import RenderTarget, render_views, write_npy, write_png
from .splat.ssim import psnr
from .splat.views import canonical_views
from .utils.config import PipelineConfig, get_pipeline_config
from .utils.errors import ConfigError, DomainError, InputError, SceneKitError
from .utils.logger import get_logger, setup_logging
from .utils.pipeline import add_step, build_provenance

logger = get_logger(__name__)

_VIEWS = re.compile(r"^(?:icosphere)?(\d+)$")
_DEFAULT_ALBEDO = ((0.9, 0.9, 0.9), (0.2, 0.3, 0.8))


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (InputError, ConfigError) as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(2) from exc
        except SceneKitError as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(1) from exc
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(1) from exc

    return wrapper


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _background(value: str) -> tuple[float, float, float]:
    named = {"white": (1.0, 1.0, 1.0), "black": (0.0, 0.0, 0.0)}
    if value in named:
        return named[value]
    try:
        color = tuple(float(c) for c in value.split(","))
    except ValueError as exc:
        raise DomainError(f"background must be white, black or r,g,b; got {value!r}") from exc
    if len(color) != 3 or any(c < 0 or c > 1 for c in color):
        raise DomainError(f"background must be three values in [0,1]; got {value!r}")
    return color


def _view_count(value: str) -> int:
    match = _VIEWS.match(value)
    if not match:
        raise DomainError(f"views must look like icosphere42 or 42; got {value!r}")
    return int(match.group(1))


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="YAML overlay on config/config.yaml.")
@click.option("--threads", type=int, default=None, help="Worker threads (results do not depend on it).")
@click.option("--log-level", default=None, help="Override logging.level.")
@click.pass_context
@_handle_errors
def cli(ctx: click.Context, config_path: Optional[str], threads: Optional[int], log_level: Optional[str]) -> None:
    """Object-centric scene assembly from dense per-pixel prediction maps."""
    cfg = get_pipeline_config(config_path)
    cfg = cfg.with_overrides({"runtime": {"threads": threads}, "logging": {"level": log_level}})
    setup_logging(log_cfg=cfg.logging)
    ctx.obj = {"cfg": cfg}


def _cfg(ctx: click.Context) -> PipelineConfig:
    return ctx.obj["cfg"]


@cli.command()
@click.option("--objects", type=int, default=None, help="Object count (oracle.objects).")
@click.option("--seed", type=int, default=None, help="Top-level seed (runtime.seed).")
@click.option("--noise-depth", type=float, default=None, help="Multiplicative depth noise sigma.")
@click.option("--noise-nocs", type=float, default=None, help="Additive NOCS noise sigma.")
@click.option("--noise-embedding", type=float, default=None, help="Embedding rotation angle, radians.")
@click.option("--label-flip", type=float, default=None, help="Fraction of foreground embeddings flipped.")
@click.option("--width", type=int, default=None)
@click.option("--height", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.pass_context
@_handle_errors
def synth(ctx, objects, seed, noise_depth, noise_nocs, noise_embedding, label_flip, width, height, out_dir) -> None:
    """Generate an oracle scene and write its bundle plus ground truth."""
    cfg = _cfg(ctx).with_overrides(
        {
            "runtime": {"seed": seed},
            "oracle": {
                "objects": objects,
                "noise_depth": noise_depth,
                "noise_nocs": noise_nocs,
                "noise_embedding_angle": noise_embedding,
                "label_flip_rate": label_flip,
                "width": width,
                "height": height,
            },
        }
    )
    oracle = cfg.oracle
    seed = cfg.runtime.seed
    scene = generate_scene(oracle.objects, seed, settings=oracle)

    steps: list[dict] = []
    add_step(steps, "generate_scene", objects=oracle.objects, width=oracle.width, height=oracle.height)
    add_step(
        steps, "raycast_maps",
        noise_depth=oracle.noise_depth,
        noise_nocs=oracle.noise_nocs,
        noise_embedding_angle=oracle.noise_embedding_angle,
        label_flip_rate=oracle.label_flip_rate,
    )
    output = raycast_maps(scene, oracle, build_provenance(cfg.fingerprint(), seed, "synth", steps))
    write_oracle(output, out_dir)
    click.echo(f"synth: {len(scene.objects)} objects -> {out_dir}")


@cli.command()
@click.option("--bundle", "bundle_dir", type=click.Path(), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--crf-iters", type=int, default=None, help="Mean-field iterations (crf.iterations).")
@click.option("--tau", type=float, default=None, help="Softmax temperature (crf.tau).")
@click.option("--pairwise-weight", type=float, default=None, help="Potts weight (crf.pairwise_weight).")
@click.option("--window", type=int, default=None, help="Windowed kernel radius (crf.window).")
@click.option("--ransac-threshold", type=float, default=None, help="Inlier distance, meters.")
@click.option("--min-inliers", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
@_handle_errors
def assemble(ctx, bundle_dir, out_dir, crf_iters, tau, pairwise_weight, window, ransac_threshold, min_inliers, seed) -> None:
    """Discover instances, estimate poses and export canonical Gaussians."""
    cfg = _cfg(ctx).with_overrides(
        {
            "runtime": {"seed": seed},
            "crf": {"iterations": crf_iters, "tau": tau, "pairwise_weight": pairwise_weight, "window": window},
            "ransac": {"inlier_threshold": ransac_threshold, "min_inliers": min_inliers},
        }
    )
    result = run_assemble(bundle_dir, out_dir, cfg, threads=cfg.runtime.threads)
    click.echo(f"assemble: {result.instances} instances -> {out_dir}")


@cli.command()
@click.option("--ply", "ply_path", type=click.Path(dir_okay=False), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--views", default="icosphere42", show_default=True, help="Canonical view count, e.g. icosphere42.")
@click.option("--resolution", type=int, default=None, help="Canonical view size (css.resolution).")
@click.option("--bg", default="white", show_default=True, help="white, black or r,g,b.")
@click.option("--npy", is_flag=True, help="Also write float32 NPY renders.")
@click.option("--bundle", "bundle_dir", type=click.Path(), default=None, help="Camera for camera-frame PLYs.")
@click.pass_context
@_handle_errors
def render(ctx, ply_path, out_dir, views, resolution, bg, npy, bundle_dir) -> None:
    """Render a Gaussian PLY from the canonical views (or the bundle camera)."""
    cfg = _cfg(ctx)
    g = import_gaussians_ply(ply_path)
    background = _background(bg)
    if g.frame == "canonical":
        view_set = canonical_views(
            _view_count(views),
            resolution=resolution or cfg.css.resolution,
            radius=cfg.css.radius,
            fov_deg=cfg.css.fov_deg,
        )
        targets = view_set.targets(background)
    else:
        if bundle_dir is None:
            raise InputError("camera-frame PLY needs --bundle for its camera")
        targets = [RenderTarget(read_bundle(bundle_dir).intrinsics, Sim3(), background)]

    images = render_views(g, targets, cfg.render, cfg.runtime.threads)
    out = Path(out_dir)
    for i, image in enumerate(images):
        write_png(image, out / f"view_{i:03d}.png")
        if npy:
            write_npy(image, out / f"view_{i:03d}.npy")
    steps: list[dict] = []
    add_step(steps, "render", ply=Path(ply_path).name, views=len(targets), background=list(background))
    _write_json(out / "provenance.json", build_provenance(cfg.fingerprint(), cfg.runtime.seed, "render", steps))
    click.echo(f"render: {len(images)} views -> {out_dir}")


@cli.command("css-fit")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--init", "init_ply", type=click.Path(dir_okay=False), default=None, help="Canonical PLY to start from.")
@click.option("--gaussians", "count", type=int, default=500, show_default=True, help="Random initial Gaussians when no --init.")
@click.option("--gt", "gt_dir", type=click.Path(), default=None, help="Ground-truth directory holding the target object.")
@click.option("--instance", "instance_id", type=int, default=None, help="Ground-truth instance id to fit.")
@click.option("--shape", type=click.Choice(SHAPES), default="box", show_default=True, help="Target primitive without --gt.")
@click.option("--steps", type=int, default=None, help="Optimizer steps (css.steps).")
@click.option("--views", type=int, default=None, help="Canonical view count (css.views).")
@click.option("--resolution", type=int, default=None, help="Canonical view size (css.resolution).")
@click.option("--seed", type=int, default=None)
@click.pass_context
@_handle_errors
def css_fit_cmd(ctx, out_dir, init_ply, count, gt_dir, instance_id, shape, steps, views, resolution, seed) -> None:
    """Fit canonical Gaussians to ray-traced renders of one oracle object."""
    cfg = _cfg(ctx).with_overrides(
        {"runtime": {"seed": seed}, "css": {"steps": steps, "views": views, "resolution": resolution}}
    )
    if gt_dir is not None:
        gt = read_ground_truth(gt_dir)
        chosen = [i for i in gt.instances if instance_id is None or i.instance_id == instance_id]
        if not chosen:
            raise InputError(f"no ground-truth instance {instance_id} in {gt_dir}")
        target = primitive_from_gt(chosen[0])
    else:
        target = PrimitiveObject(0, shape, 1, shape, Sim3(), _DEFAULT_ALBEDO)

    css = cfg.css
    view_set = canonical_views(css.views, resolution=css.resolution, radius=css.radius, fov_deg=css.fov_deg)
    targets = view_set.targets(cfg.render.background)
    gt_images = canonical_gt_renders(target, targets)
    init = import_gaussians_ply(init_ply) if init_ply else random_init(count, cfg.runtime.seed)

    before = render_views(init, targets, cfg.render, cfg.runtime.threads)
    result = css_fit(init, gt_images, view_set, css, cfg.render, cfg.runtime.threads)
    after = render_views(result.gaussians, targets, cfg.render, cfg.runtime.threads)

    out = Path(out_dir)
    export_gaussians_ply(result.gaussians, out / "fitted.ply")
    steps_log: list[dict] = []
    add_step(steps_log, "css_fit", shape=target.shape, views=css.views, resolution=css.resolution, steps=css.steps)
    _write_json(
        out / "fit.json",
        {
            "trace": result.trace,
            "accepted_steps": result.accepted_steps,
            "rejected_steps": result.rejected_steps,
            "psnr_before": float(np.mean([psnr(a, b) for a, b in zip(before, gt_images)])),
            "psnr_after": float(np.mean([psnr(a, b) for a, b in zip(after, gt_images)])),
            "provenance": build_provenance(cfg.fingerprint(), cfg.runtime.seed, "css-fit", steps_log),
        },
    )
    click.echo(f"css-fit: loss {result.initial_loss:.6f} -> {result.final_loss:.6f}")


def _task_losses(cfg: PipelineConfig, bundle_dir, gt_dir, losses_path) -> dict:
    losses: dict = {}
    if bundle_dir and gt_dir:
        maps = read_bundle(bundle_dir)
        gt = read_ground_truth(gt_dir)
        K = maps.intrinsics
        if gt.depth is not None:
            losses["depth"] = depth_loss(
                to_canonical_inverse(maps.metric_depth(), K), to_canonical_inverse(gt.depth, K), cfg.depth.lambda_grad
            )
        background = maps.background_index(cfg.crf.background_name)
        labels = gt.label_map(background=background)
        present = np.zeros(len(maps.vocab_names), dtype=bool)
        present[np.unique(labels)] = True
        losses["sem"] = semantics_loss(maps.embeddings, maps.vocab, labels, cfg.crf.tau, present)
        foreground = gt.mask > 0
        if gt.depth is not None and foreground.any():
            losses["nocs"] = nocs_loss(
                read_nocs_binned(bundle_dir, maps, cfg.nocs.bins),
                gt.nocs_map(K),
                foreground,
                ce_weight=cfg.nocs.ce_weight,
                mse_weight=cfg.nocs.mse_weight,
            )
        if gt.fov is not None:
            losses["cam"] = camera_fov_loss(maps.fov, gt.fov, cfg.objectives.huber_delta)
        offsets = np.asarray(maps.gauss_params[..., OFFSET])[foreground]
        losses["offset"] = offset_regularizer(offsets, cfg.gaussians.tau_offset) / max(1, len(offsets))
    if losses_path:
        losses.update(json.loads(Path(losses_path).read_text(encoding="utf-8")))
    if not losses:
        raise InputError("--task losses needs --bundle and --gt, or --losses")
    vector = losses_from_mapping(losses)
    total, grads = combine(vector)
    return {
        "losses": dict(vector.losses),
        "log_vars": dict(vector.log_vars),
        "total": total,
        "log_var_grads": grads,
        "stationary_log_vars": vector.stationary_log_vars(),
    }


@cli.command()
@click.option("--bundle", "bundle_dir", type=click.Path(), default=None)
@click.option("--scene", "scene_dir", type=click.Path(), default=None, help="assemble output directory.")
@click.option("--gt", "gt_dir", type=click.Path(), default=None)
@click.option("--losses", "losses_path", type=click.Path(dir_okay=False), default=None, help="JSON {task: loss}.")
@click.option("--task", type=click.Choice(["depth", "losses", "full"]), default="full", show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@_handle_errors
def evaluate(ctx, bundle_dir, scene_dir, gt_dir, losses_path, task, out_path) -> None:
    """Score a bundle / assembled scene against oracle ground truth."""
    cfg = _cfg(ctx)
    if task == "losses":
        payload = _task_losses(cfg, bundle_dir, gt_dir, losses_path)
        table = "\n".join(f"{k:>8s}  {v:.6f}" for k, v in payload["losses"].items()) + f"\n   total  {payload['total']:.6f}"
    else:
        if bundle_dir is None or gt_dir is None:
            raise InputError(f"--task {task} needs --bundle and --gt")
        maps = read_bundle(bundle_dir)
        gt = read_ground_truth(gt_dir)
        if task == "depth":
            if gt.depth is None:
                raise InputError(f"gt_depth.npy missing in {gt_dir}")
            valid = depth_eval_mask(gt.depth, gt.mask > 0, cfg.depth.use_mask)
            if not valid.any():
                raise InputError(f"no ground-truth depth to score in {gt_dir} (depth.use_mask={cfg.depth.use_mask})")
            payload = {"depth": eval_depth(maps.metric_depth(), gt.depth, valid).to_dict()}
        else:
            prediction = read_prediction(scene_dir) if scene_dir else None
            payload = evaluate_scene(
                maps, gt, prediction, cfg.eval, cfg.render, cfg.runtime.threads, use_mask=cfg.depth.use_mask
            ).to_dict()
        table = report_table(payload)

    steps: list[dict] = []
    add_step(steps, "evaluate", task=task)
    payload["provenance"] = build_provenance(cfg.fingerprint(), cfg.runtime.seed, "evaluate", steps)
    if out_path:
        _write_json(Path(out_path), payload)
    click.echo(table)


def main() -> None:
    cli(prog_name="scenekit")


if __name__ == "__main__":
    main()
