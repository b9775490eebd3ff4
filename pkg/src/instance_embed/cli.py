"""Command-line pipeline: gen, optimize, cluster, eval, trace, pipeline.

Every command is deterministic given its config and inputs; rerunning with
the same arguments produces byte-identical files. Exit codes are a stable
contract:

  0  success
  2  configuration or parse problem (bad JSON, unknown keys, bad shapes)
  3  I/O failure
  4  numerical divergence or degeneracy
  5  empty input domain (no foreground, no instances)

The INSTANCE_EMBED_LOG environment variable (error, info, or debug) sets the
stderr log level; the default is error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .clustering import assign_to_modes, flatten_foreground, mean_shift_modes
from .core import BinaryMask, EmbeddingField, LabelMap, validate_pair
from .config import RunConfig, default_run_config, load_run_config, override_seed
from .errors import (
    ConfigError,
    DegenerateShift,
    DegenerateVector,
    EmptyForeground,
    EmptyInstance,
    InstanceEmbedError,
    NoGroundTruth,
    NonFiniteLoss,
)
from . import fileio
from .metrics import (
    Detection,
    DetectionSet,
    detection_empty,
    detection_recall,
    instance_map50_labels,
    map_50_95,
    pixel_accuracy,
    pixel_confusion,
    seg_iou,
    seg_iou_undefined,
)
from .optimize import normalize_field, optimize_embeddings
from .sampling import KernelGrid, OffsetField, trace_receptive_field
from .scenes import Scene, gen_scene

log = logging.getLogger("instance_embed")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _load_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else default_run_config()
    if getattr(args, "seed", None) is not None:
        cfg = override_seed(cfg, args.seed)
    return cfg


def _out_dir(args, cfg: RunConfig) -> Path:
    out = args.out or cfg.output_dir
    if not out:
        raise ConfigError("no output directory: pass --out or set output_dir")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_scene(scene: Scene, cfg: RunConfig, out: Path) -> None:
    fileio.write_labels(out / "labels.pgm", scene.labels)
    fileio.write_mask(out / "drivable.pgm", scene.drivable_mask)
    fileio.write_mask(out / "lanes.pgm", scene.lane_mask)
    fileio.write_boxes(out / "boxes.json", [scene.gt_boxes])
    sc = cfg.scene
    fileio.write_json(
        out / "scene.json",
        {
            "width": sc.width,
            "height": sc.height,
            "num_instances": sc.num_instances,
            "layout": sc.layout,
            "gap_pixels": sc.gap_pixels,
            "seed": sc.seed,
            "lane_thickness": sc.lane_thickness,
        },
    )


def _write_optimization(trace, out: Path) -> None:
    fileio.write_embf(out / "embeddings.embf", trace.final.values)
    fileio.write_json(
        out / "trace.json",
        {
            "steps_taken": trace.steps_taken,
            "entries": [
                {"l_var": b.l_var, "l_dist": b.l_dist, "l_reg": b.l_reg, "total": b.total}
                for b in trace.breakdowns
            ],
        },
    )


def _run_clustering(emb: EmbeddingField, mask: BinaryMask, cfg: RunConfig, out: Path):
    normalized = normalize_field(emb, mask)
    x_points, index = flatten_foreground(normalized, mask)
    search = mean_shift_modes(x_points, cfg.cluster)
    if search.modes.shape[0] == 0:
        from .clustering import ClusterResult
        from .core import Grid2D

        grid = np.full((index.height, index.width), -1, dtype=np.int64)
        result = ClusterResult(
            np.zeros((0, normalized.dim)), Grid2D(grid), 0, np.zeros(0, dtype=np.int64)
        )
    else:
        result = assign_to_modes(x_points, index, search.modes, cfg.cluster)
    fileio.write_labels(out / "instances.pgm", LabelMap(result.assignment.values + 1))
    fileio.write_json(
        out / "modes.json",
        {
            "num_clusters": result.num_clusters,
            "modes": [list(m) for m in result.modes],
            "basin_pixels": [int(b) for b in result.basin_pixels],
            "dropped_seeds": search.dropped_seeds,
        },
    )
    return result


def _segmentation_report(pred: BinaryMask, gt: BinaryMask) -> dict:
    counts = pixel_confusion(pred, gt)
    flags = []
    if seg_iou_undefined(counts):
        flags.append("iou_empty_vs_empty")
    return {"iou": seg_iou(counts), "accuracy": pixel_accuracy(counts), "flags": flags}


def _detection_report(preds, gts, metrics_cfg) -> dict:
    flags = []
    for cls in metrics_cfg.classes:
        if detection_empty(preds, gts, cls):
            flags.append(f"class_{cls}_no_gt_no_pred")
    report = {"map_50_95": map_50_95(preds, gts, metrics_cfg.classes), "flags": flags}
    try:
        report["recall"] = detection_recall(
            preds,
            gts,
            metrics_cfg.classes,
            metrics_cfg.recall_iou_threshold,
            metrics_cfg.recall_score_threshold,
        )
    except NoGroundTruth:
        flags.append("recall_no_ground_truth")
    return report


def _instance_report(pred: LabelMap, gt: LabelMap) -> dict:
    flags = []
    if pred.num_instances == 0 and gt.num_instances == 0:
        flags.append("map50_empty_vs_empty")
    return {"map50": instance_map50_labels(pred, gt), "flags": flags}


def _boxes_from_clusters(result, total_fg: int) -> DetectionSet:
    """Bounding boxes of predicted instances, scored by basin population."""
    dets = []
    assign = result.assignment.values
    for j in range(result.num_clusters):
        ys, xs = np.nonzero(assign == j)
        score = min(1.0, float(result.basin_pixels[j]) / max(total_fg, 1))
        dets.append(
            Detection(
                box=(float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1)),
                class_id=0,
                score=score,
            )
        )
    return DetectionSet(tuple(dets), image_id=0)


def cmd_gen(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    scene = gen_scene(cfg.scene)
    _write_scene(scene, cfg, out)
    log.info("wrote scene with %d instances to %s", cfg.scene.num_instances, out)
    return 0


def cmd_optimize(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    labels = fileio.read_labels(args.labels)
    trace = optimize_embeddings(labels, cfg.embedding_dim, cfg.loss, cfg.optimizer)
    _write_optimization(trace, out)
    final = trace.breakdowns[-1].total if trace.breakdowns else None
    log.info("optimized %d steps, final total %s", trace.steps_taken, final)
    return 0


def cmd_cluster(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    emb = EmbeddingField(fileio.read_embf(args.embeddings))
    mask = fileio.read_mask(args.mask)
    result = _run_clustering(emb, mask, cfg, out)
    log.info("found %d clusters", result.num_clusters)
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    report = {}
    if (args.pred_drivable is None) != (args.gt_drivable is None):
        raise ConfigError("drivable evaluation needs both --pred-drivable and --gt-drivable")
    if args.pred_drivable:
        report["drivable_segmentation"] = _segmentation_report(
            fileio.read_mask(args.pred_drivable), fileio.read_mask(args.gt_drivable)
        )
    if (args.pred_lanes is None) != (args.gt_lanes is None):
        raise ConfigError("lane evaluation needs both --pred-lanes and --gt-lanes")
    if args.pred_lanes:
        report["lane_segmentation"] = _segmentation_report(
            fileio.read_mask(args.pred_lanes), fileio.read_mask(args.gt_lanes)
        )
    if (args.pred_instances is None) != (args.gt_labels is None):
        raise ConfigError("instance evaluation needs both --pred-instances and --gt-labels")
    if args.pred_instances:
        pred = fileio.read_labels(args.pred_instances)
        gt = fileio.read_labels(args.gt_labels)
        validate_pair(pred, gt)
        report["instance_segmentation"] = _instance_report(pred, gt)
    if (args.pred_boxes is None) != (args.gt_boxes is None):
        raise ConfigError("detection evaluation needs both --pred-boxes and --gt-boxes")
    if args.pred_boxes:
        preds = fileio.read_boxes(args.pred_boxes)
        gts = fileio.read_boxes(args.gt_boxes)
        report["detection"] = _detection_report(preds, gts, cfg.metrics)
    if not report:
        raise ConfigError("nothing to evaluate: supply at least one prediction/target pair")
    fileio.write_json(out / "metrics.json", report)
    return 0


def cmd_trace(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    kernel = KernelGrid(args.kernel_size)
    levels = args.levels if args.levels is not None else (len(args.offsets) or 3)
    if levels < 1:
        raise ConfigError(f"levels must be >= 1, got {levels}")
    if args.offsets and len(args.offsets) != levels:
        raise ConfigError(f"got {len(args.offsets)} offset files for {levels} levels")
    if args.strides is None:
        strides = 1
    else:
        try:
            strides = [int(tok) for tok in args.strides.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad --strides value {args.strides!r}") from exc
        if len(strides) == 1:
            strides = strides[0]
    k2 = kernel.k * kernel.k
    stack = []
    if args.offsets:
        for path in args.offsets:
            blob = fileio.read_embf(path)
            if blob.shape[2] != 2 * k2:
                raise ConfigError(
                    f"{path}: offset blob depth {blob.shape[2]} != 2*k*k = {2 * k2}"
                )
            stack.append(OffsetField(blob.reshape(blob.shape[0], blob.shape[1], k2, 2)))
    else:
        stack = [None] * levels
    trace = trace_receptive_field(stack, kernel, tuple(args.origin), strides)
    fileio.write_trace_csv(out / "trace.csv", trace)
    log.info("traced %d leaf points", trace.points.shape[0])
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    scene = gen_scene(cfg.scene)
    _write_scene(scene, cfg, out)
    trace = optimize_embeddings(scene.labels, cfg.embedding_dim, cfg.loss, cfg.optimizer)
    _write_optimization(trace, out)
    result = _run_clustering(trace.final, scene.drivable_mask, cfg, out)

    pred_drivable = BinaryMask((result.assignment.values >= 0).astype(np.uint8))
    pred_labels = LabelMap(result.assignment.values + 1)
    report = {
        "drivable_segmentation": _segmentation_report(pred_drivable, scene.drivable_mask),
        "instance_segmentation": _instance_report(pred_labels, scene.labels),
        "detection": _detection_report(
            [_boxes_from_clusters(result, scene.drivable_mask.count())],
            [scene.gt_boxes],
            cfg.metrics,
        ),
    }
    fileio.write_json(out / "metrics.json", report)
    log.info("pipeline finished: %d clusters", result.num_clusters)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="instance-embed",
        description="Embedding-based instance segmentation pipeline on synthetic scenes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="JSON run config path")
        p.add_argument("--out", help="output directory (overrides config output_dir)")
        if seed:
            p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("gen", help="generate a synthetic scene")
    common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("optimize", help="fit embeddings to a label map")
    common(p)
    p.add_argument("--labels", required=True, help="label map PGM")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("cluster", help="cluster an embedding field into instances")
    common(p, seed=False)
    p.add_argument("--embeddings", required=True, help="embedding EMBF blob")
    p.add_argument("--mask", required=True, help="foreground mask PGM")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("eval", help="compute metrics from prediction/target files")
    common(p, seed=False)
    p.add_argument("--pred-drivable")
    p.add_argument("--gt-drivable")
    p.add_argument("--pred-lanes")
    p.add_argument("--gt-lanes")
    p.add_argument("--pred-instances")
    p.add_argument("--gt-labels")
    p.add_argument("--pred-boxes")
    p.add_argument("--gt-boxes")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("trace", help="trace a receptive field through stacked layers")
    common(p, seed=False)
    p.add_argument("--origin", type=int, nargs=2, required=True, metavar=("Y", "X"))
    p.add_argument("--kernel-size", type=int, default=3)
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--strides", default=None, help="comma-separated per-level strides")
    p.add_argument(
        "--offsets",
        action="append",
        default=[],
        help="EMBF offset blob per level, top layer first (repeatable)",
    )
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("pipeline", help="gen, optimize, normalize, cluster, eval")
    common(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    level_name = os.environ.get("INSTANCE_EMBED_LOG", "error")
    if level_name not in _LOG_LEVELS:
        print(
            f"INSTANCE_EMBED_LOG must be one of {sorted(_LOG_LEVELS)}, got {level_name!r}",
            file=sys.stderr,
        )
        return 2
    if not logging.getLogger().handlers:
        logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(_LOG_LEVELS[level_name])

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NonFiniteLoss, DegenerateVector, DegenerateShift) as exc:
        log.error("numerical failure: %s", exc)
        return 4
    except (EmptyForeground, EmptyInstance) as exc:
        log.error("empty input: %s", exc)
        return 5
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return 3
    except (InstanceEmbedError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
