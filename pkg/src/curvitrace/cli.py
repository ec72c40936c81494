"""Command-line pipelines: synth | features | trace | eval | loss.

All commands are deterministic given a config and seed; outputs are written
atomically and never depend on wall-clock or environment state.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .grid import Grid
from .gridio import GridIOError, grid_read, grid_write, to_unit_float
from .losses import img_loss, weighted_bce
from .metrics import evaluate
from .providers import ProviderError, build_classical, build_file, build_oracle
from .swcio import SwcError, swc_read, swc_write
from .synth import GroundTruthLabels, synthesize
from .tracer import trace_all

# synth output basenames
INTENSITY = "intensity"
LABEL_CENTERLINE = "label_centerline"
LABEL_BOUNDARY = "label_boundary"
RADIUS_FIELD = "radius_field"
DIRECTION_FIELD = "direction_field"
GT_SWC = "gt.swc"
# provider map basenames (features output, file-provider input)
MAP_CENTERLINE = "centerline"
MAP_BOUNDARY = "boundary"
MAP_RADIUS = "radius"
MAP_DIRECTION = "direction"


class CliError(RuntimeError):
    pass


def _load_run_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return load_config(path)


def _resolve_seed(cfg: RunConfig, override: int | None) -> int:
    return cfg.rng_seed if override is None else int(override)


def _require(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise CliError(f"missing {what}: {path}")
    return path


def cmd_synth(args) -> int:
    cfg = _load_run_config(args.config)
    seed = _resolve_seed(cfg, args.seed_override)
    synth_cfg = dataclasses.replace(cfg.synth, rng_seed=seed)
    forest, intensity, labels = synthesize(synth_cfg)
    out = args.output
    os.makedirs(out, exist_ok=True)
    grid_write(intensity, os.path.join(out, INTENSITY), dtype="f32")
    grid_write(labels.centerline, os.path.join(out, LABEL_CENTERLINE), dtype="u8")
    grid_write(labels.boundary, os.path.join(out, LABEL_BOUNDARY), dtype="u8")
    grid_write(labels.radius_field, os.path.join(out, RADIUS_FIELD), dtype="f32")
    grid_write(labels.direction_field, os.path.join(out, DIRECTION_FIELD), dtype="f32")
    swc_write(forest, os.path.join(out, GT_SWC))
    print(f"synth: {len(forest)} branches, dims {labels.centerline.dims} -> {out}")
    return 0


def cmd_features(args) -> int:
    cfg = _load_run_config(args.config)
    path = args.input
    if os.path.isdir(path):
        path = os.path.join(path, INTENSITY)
    intensity = grid_read(_require(path + ".hdr", "intensity grid header"))
    if not np.issubdtype(intensity.values.dtype, np.floating):
        intensity = to_unit_float(intensity)
    provider = build_classical(intensity, params=cfg.classical, bins=cfg.bin_scheme())
    out = args.output
    os.makedirs(out, exist_ok=True)
    grid_write(Grid(values=provider.centerline), os.path.join(out, MAP_CENTERLINE), dtype="f32")
    grid_write(Grid(values=provider.boundary), os.path.join(out, MAP_BOUNDARY), dtype="f32")
    grid_write(Grid(values=provider.radius_map), os.path.join(out, MAP_RADIUS), dtype="f32")
    grid_write(
        Grid(values=provider.direction_vectors, channels=provider.dim),
        os.path.join(out, MAP_DIRECTION),
        dtype="f32",
    )
    print(f"features: classical maps for dims {provider.dims} -> {out}")
    return 0


def _labels_from_dir(path: str) -> GroundTruthLabels:
    return GroundTruthLabels(
        centerline=grid_read(_require(os.path.join(path, LABEL_CENTERLINE) + ".hdr", "centerline label")),
        boundary=grid_read(_require(os.path.join(path, LABEL_BOUNDARY) + ".hdr", "boundary label")),
        radius_field=grid_read(_require(os.path.join(path, RADIUS_FIELD) + ".hdr", "radius field")),
        direction_field=grid_read(_require(os.path.join(path, DIRECTION_FIELD) + ".hdr", "direction field")),
    )


def _build_provider(kind: str, input_dir: str, cfg: RunConfig):
    bins = cfg.bin_scheme()
    smoothing = cfg.provider.smoothing() if cfg.provider.kind == kind else None
    if kind == "oracle":
        forest = swc_read(_require(os.path.join(input_dir, GT_SWC), "ground-truth SWC"))
        labels = _labels_from_dir(input_dir)
        return build_oracle(
            forest, labels, bins=bins,
            history_smoothing=False if smoothing is None else smoothing,
        )
    if kind == "classical":
        path = os.path.join(input_dir, INTENSITY)
        intensity = grid_read(_require(path + ".hdr", "intensity grid"))
        return build_classical(
            intensity, params=cfg.classical, bins=bins,
            history_smoothing=True if smoothing is None else smoothing,
        )
    if kind == "file":
        def map_path(name):
            return _require(os.path.join(input_dir, name) + ".hdr", f"{name} map")[:-4]

        return build_file(
            map_path(MAP_CENTERLINE),
            map_path(MAP_BOUNDARY),
            map_path(MAP_RADIUS),
            map_path(MAP_DIRECTION),
            bins=bins,
            history_smoothing=False if smoothing is None else smoothing,
        )
    raise CliError(f"unknown provider kind {kind!r}")


def cmd_trace(args) -> int:
    cfg = _load_run_config(args.config)
    kind = args.provider or cfg.provider.kind
    provider = _build_provider(kind, args.input, cfg)
    forest = trace_all(provider, cfg.trace)
    swc_write(forest, args.output)
    print(f"trace: {len(forest)} branches ({forest.node_count()} nodes) -> {args.output}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_run_config(args.config)
    gt = swc_read(_require(args.gt, "ground-truth SWC"))
    pred = swc_read(_require(args.pred, "prediction SWC"))
    report = evaluate(pred, gt, cfg.match)
    text = json.dumps(report.to_dict(), indent=2) + "\n"
    if args.output:
        tmp = args.output + ".tmp"
        with open(tmp, "w") as f:
            f.write(text)
        os.replace(tmp, args.output)
    sys.stdout.write(text)
    return 0


def cmd_loss(args) -> int:
    cfg = _load_run_config(args.config)
    w = cfg.losses

    def read_pair(pred_name, gt_name):
        pred = grid_read(_require(os.path.join(args.pred, pred_name) + ".hdr", f"{pred_name} grid"))
        gt = grid_read(_require(os.path.join(args.gt, gt_name) + ".hdr", f"{gt_name} grid"))
        if pred.dims != gt.dims:
            raise CliError(f"dimension mismatch: {pred_name} {pred.dims} vs {gt_name} {gt.dims}")
        return pred.values.astype(np.float64), gt.values.astype(np.float64)

    cl_pred, cl_gt = read_pair(MAP_CENTERLINE, LABEL_CENTERLINE)
    bd_pred, bd_gt = read_pair(MAP_BOUNDARY, LABEL_BOUNDARY)
    cl = weighted_bce(cl_pred, cl_gt, w.w_c)
    bd = weighted_bce(bd_pred, bd_gt, w.w_b)
    values = {
        "centerline_bce": cl,
        "boundary_bce": bd,
        "img_loss": img_loss(cl, bd, w),
    }
    text = json.dumps(values, indent=2) + "\n"
    if args.output:
        tmp = args.output + ".tmp"
        with open(tmp, "w") as f:
            f.write(text)
        os.replace(tmp, args.output)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curvitrace",
        description="Curvilinear structure tracing pipelines over grid + SWC files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic volume with labels and GT SWC")
    p.add_argument("--config", help="run configuration (JSON)")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--seed-override", type=int, help="override the configured rng seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="compute classical provider maps from an intensity grid")
    p.add_argument("--config", help="run configuration (JSON)")
    p.add_argument("--input", required=True, help="intensity grid basename/.hdr, or a synth directory")
    p.add_argument("--output", required=True, help="output directory for map grids")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("trace", help="reconstruct branches and write SWC")
    p.add_argument("--config", help="run configuration (JSON)")
    p.add_argument("--provider", choices=["oracle", "classical", "file"], help="provider kind (default from config)")
    p.add_argument("--input", required=True, help="input directory (synth output or provider maps)")
    p.add_argument("--output", required=True, help="output SWC path")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("eval", help="score a reconstruction against ground truth")
    p.add_argument("--config", help="run configuration (JSON)")
    p.add_argument("--gt", required=True, help="ground-truth SWC")
    p.add_argument("--pred", required=True, help="predicted SWC")
    p.add_argument("--output", help="also write the report to this path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("loss", help="weighted BCE losses between prediction maps and labels")
    p.add_argument("--config", help="run configuration (JSON)")
    p.add_argument("--pred", required=True, help="directory with centerline/boundary prediction grids")
    p.add_argument("--gt", required=True, help="directory with label_centerline/label_boundary grids")
    p.add_argument("--output", help="also write the values to this path")
    p.set_defaults(func=cmd_loss)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, GridIOError, SwcError, ProviderError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
