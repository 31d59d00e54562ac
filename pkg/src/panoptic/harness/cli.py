"""Command-line driver for the synthetic pipeline.

Subcommands read and write ``.ptns`` tensor containers in a working
directory; ``manifest.json`` carries the dataset spec and scene batch
metadata between stages.  Everything is seeded and single-threaded per
scene, so fixed arguments produce byte-identical outputs for any worker
count.

    panoptic synth           generate ground-truth scenes
    panoptic encode-targets  ground truth -> center heatmap + offsets
    panoptic perturb         targets -> noisy "predictions"
    panoptic postprocess     predictions -> panoptic maps
    panoptic evaluate        predictions vs ground truth -> report
    panoptic roundtrip       the whole pipeline in memory -> report
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from panoptic.core import PanopticError
from panoptic.harness import config as config_mod
from panoptic.harness import pipeline
from panoptic.harness.noise import perturb_predictions
from panoptic.harness.reports import (
    evaluation_report,
    format_report_table,
    write_report,
)
from panoptic.harness.scenes import SceneGenerationError, generate_scene
from panoptic.harness.tensorio import TensorFormatError, read_tensor, write_tensor
from panoptic.metrics import (
    ApAccumulator,
    ConfusionAccumulator,
    PqAccumulator,
    instance_masks_from_panoptic,
)
from panoptic.postprocess import panoptic_inference
from panoptic.targets import OffsetField, encode_targets


def _parse_size(value: str) -> tuple[int, int]:
    """Parses HxW (or one integer for a square image)."""
    parts = value.lower().split("x")
    try:
        if len(parts) == 1:
            h = w = int(parts[0])
        elif len(parts) == 2:
            h, w = int(parts[0]), int(parts[1])
        else:
            raise ValueError
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must be H or HxW, got {value!r}")
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return h, w


def _map_scenes(fn, items, workers: int):
    """Runs ``fn`` over ``items`` preserving order, optionally in processes."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _load_manifest(directory: Path) -> dict:
    path = directory / "manifest.json"
    if not path.is_file():
        raise PanopticError(f"missing manifest.json in {directory}")
    return json.loads(path.read_text(encoding="utf-8"))


def _write_manifest(directory: Path, manifest: dict) -> None:
    text = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    (directory / "manifest.json").write_text(text, encoding="utf-8")


def _config_from_manifest(args, manifest: dict) -> config_mod.HarnessConfig:
    """Resolves configuration: an explicit --config wins, else the manifest."""
    if args.config is not None:
        return config_mod.load_config(args.config)
    overrides = {
        section: manifest[section]
        for section in ("dataset", "scene", "noise", "encoder")
        if section in manifest
    }
    return config_mod.load_config(None, overrides=overrides)


def _scene_name(index: int) -> str:
    return f"{index:04d}"


def _scene_count(manifest: dict) -> int:
    return int(manifest.get("count", 1))


# Worker entry points (top level so they pickle).

def _synth_worker(task):
    scene_dict, spec_dict, out_dir, index = task
    spec = config_mod.dataset_spec_from_dict(spec_dict)
    scene = config_mod.scene_config_from_dict(scene_dict)
    panoptic, semantic = generate_scene(scene, spec)
    name = _scene_name(index)
    write_tensor(Path(out_dir) / f"gt_panoptic_{name}.ptns", panoptic.astype(np.uint32))
    write_tensor(Path(out_dir) / f"gt_semantic_{name}.ptns", semantic.astype(np.uint32))
    return name


def _encode_worker(task):
    in_dir, out_dir, spec_dict, encoder_dict, index = task
    spec = config_mod.dataset_spec_from_dict(spec_dict)
    params = config_mod.encoder_params_from_dict(encoder_dict)
    name = _scene_name(index)
    gt = read_tensor(Path(in_dir) / f"gt_panoptic_{name}.ptns")
    heatmap, offsets = encode_targets(gt, spec, params)
    write_tensor(Path(out_dir) / f"heatmap_{name}.ptns", heatmap)
    write_tensor(Path(out_dir) / f"offsets_{name}.ptns", offsets.offsets)
    write_tensor(Path(out_dir) / f"valid_mask_{name}.ptns", offsets.valid_mask)
    return name


def _perturb_worker(task):
    in_dir, out_dir, spec_dict, noise_dict, index = task
    spec = config_mod.dataset_spec_from_dict(spec_dict)
    noise = config_mod.noise_config_from_dict(noise_dict)
    name = _scene_name(index)
    in_dir = Path(in_dir)
    semantic = read_tensor(in_dir / f"gt_semantic_{name}.ptns").astype(np.int32)
    heatmap = read_tensor(in_dir / f"heatmap_{name}.ptns")
    offsets = OffsetField(
        read_tensor(in_dir / f"offsets_{name}.ptns"),
        read_tensor(in_dir / f"valid_mask_{name}.ptns"),
    )
    pred_semantic, pred_heatmap, pred_offsets = perturb_predictions(
        semantic, heatmap, offsets, noise, spec, stream=index
    )
    out_dir = Path(out_dir)
    write_tensor(out_dir / f"pred_semantic_{name}.ptns", pred_semantic.astype(np.uint32))
    write_tensor(out_dir / f"pred_heatmap_{name}.ptns", pred_heatmap)
    write_tensor(out_dir / f"pred_offsets_{name}.ptns", pred_offsets.offsets)
    write_tensor(out_dir / f"pred_valid_mask_{name}.ptns", pred_offsets.valid_mask)
    return name


def _postprocess_worker(task):
    in_dir, out_dir, spec_dict, postprocess_dict, index = task
    spec = config_mod.dataset_spec_from_dict(spec_dict)
    params = config_mod.postprocess_params_from_dict(postprocess_dict)
    name = _scene_name(index)
    in_dir = Path(in_dir)

    def pick(pred_name: str, gt_name: str) -> Path:
        pred_path = in_dir / f"{pred_name}_{name}.ptns"
        return pred_path if pred_path.is_file() else in_dir / f"{gt_name}_{name}.ptns"

    semantic = read_tensor(pick("pred_semantic", "gt_semantic")).astype(np.int32)
    heatmap = read_tensor(pick("pred_heatmap", "heatmap"))
    offsets = OffsetField(
        read_tensor(pick("pred_offsets", "offsets")),
        read_tensor(pick("pred_valid_mask", "valid_mask")),
    )
    panoptic = panoptic_inference(semantic, heatmap, offsets, spec, params)
    out_dir = Path(out_dir)
    write_tensor(out_dir / f"pred_panoptic_{name}.ptns", panoptic)
    write_tensor(out_dir / f"pred_semantic_{name}.ptns", semantic.astype(np.uint32))
    return name


def _evaluate_worker(task):
    pred_dir, gt_dir, spec_dict, index = task
    spec = config_mod.dataset_spec_from_dict(spec_dict)
    name = _scene_name(index)
    pred_dir = Path(pred_dir)
    gt_dir = Path(gt_dir)
    pred_panoptic = read_tensor(pred_dir / f"pred_panoptic_{name}.ptns")
    gt_panoptic = read_tensor(gt_dir / f"gt_panoptic_{name}.ptns")

    pq_acc = PqAccumulator(spec.num_classes)
    pq_acc.add_image(pred_panoptic, gt_panoptic, spec)
    ap_acc = ApAccumulator()
    ap_acc.add_image(
        instance_masks_from_panoptic(pred_panoptic, spec),
        [(c, m) for c, m, _ in instance_masks_from_panoptic(gt_panoptic, spec)],
    )
    confusion = None
    pred_sem_path = pred_dir / f"pred_semantic_{name}.ptns"
    gt_sem_path = gt_dir / f"gt_semantic_{name}.ptns"
    if pred_sem_path.is_file() and gt_sem_path.is_file():
        confusion = ConfusionAccumulator(spec.num_classes)
        confusion.add_image(
            read_tensor(pred_sem_path).astype(np.int32),
            read_tensor(gt_sem_path).astype(np.int32),
            spec,
        )
    return {"pq": pq_acc, "ap": ap_acc, "confusion": confusion}


def _roundtrip_worker(task):
    config, base_seed, index = task
    scene = pipeline.scene_config_for_index(config.scene, base_seed, index)
    return pipeline.run_scene(scene, config, noise_stream=index)


# Subcommand implementations.

def _cmd_synth(args) -> int:
    cfg = config_mod.load_config(args.config)
    scene = cfg.scene
    if args.size is not None:
        scene = dataclasses.replace(scene, height=args.size[0], width=args.size[1])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec_dict = config_mod.dataset_spec_to_dict(cfg.dataset)
    tasks = []
    for index in range(args.count):
        per_scene = pipeline.scene_config_for_index(scene, args.seed, index)
        tasks.append((config_mod.scene_config_to_dict(per_scene), spec_dict, str(out_dir), index))
    _map_scenes(_synth_worker, tasks, args.workers)
    manifest = {
        "dataset": spec_dict,
        "scene": config_mod.scene_config_to_dict(scene),
        "encoder": {"sigma": cfg.encoder.sigma},
        "seed": args.seed,
        "count": args.count,
    }
    _write_manifest(out_dir, manifest)
    print(f"wrote {args.count} scene(s) to {out_dir}")
    return 0


def _cmd_encode_targets(args) -> int:
    in_dir = Path(args.in_dir)
    manifest = _load_manifest(in_dir)
    cfg = _config_from_manifest(args, manifest)
    out_dir = Path(args.out) if args.out else in_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    spec_dict = config_mod.dataset_spec_to_dict(cfg.dataset)
    encoder_dict = {"sigma": cfg.encoder.sigma}
    count = _scene_count(manifest)
    tasks = [
        (str(in_dir), str(out_dir), spec_dict, encoder_dict, index)
        for index in range(count)
    ]
    _map_scenes(_encode_worker, tasks, args.workers)
    if out_dir != in_dir:
        _write_manifest(out_dir, manifest)
    print(f"encoded targets for {count} scene(s) in {out_dir}")
    return 0


def _cmd_perturb(args) -> int:
    in_dir = Path(args.in_dir)
    manifest = _load_manifest(in_dir)
    cfg = _config_from_manifest(args, manifest)
    noise = cfg.noise
    if args.seed is not None:
        noise = dataclasses.replace(noise, seed=args.seed)
    if args.flip_rate is not None:
        noise = dataclasses.replace(noise, semantic_flip_rate=args.flip_rate)
    if args.heatmap_noise is not None:
        noise = dataclasses.replace(noise, heatmap_noise_std=args.heatmap_noise)
    if args.offset_noise is not None:
        noise = dataclasses.replace(noise, offset_noise_std=args.offset_noise)
    out_dir = Path(args.out) if args.out else in_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    spec_dict = config_mod.dataset_spec_to_dict(cfg.dataset)
    noise_dict = dataclasses.asdict(noise)
    count = _scene_count(manifest)
    tasks = [
        (str(in_dir), str(out_dir), spec_dict, noise_dict, index)
        for index in range(count)
    ]
    _map_scenes(_perturb_worker, tasks, args.workers)
    if out_dir != in_dir:
        manifest = dict(manifest)
        manifest["noise"] = noise_dict
        _write_manifest(out_dir, manifest)
    print(f"perturbed {count} scene(s) into {out_dir}")
    return 0


def _cmd_postprocess(args) -> int:
    in_dir = Path(args.in_dir)
    manifest = _load_manifest(in_dir)
    cfg = _config_from_manifest(args, manifest)
    out_dir = Path(args.out) if args.out else in_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    spec_dict = config_mod.dataset_spec_to_dict(cfg.dataset)
    post_dict = dataclasses.asdict(cfg.postprocess)
    count = _scene_count(manifest)
    tasks = [
        (str(in_dir), str(out_dir), spec_dict, post_dict, index)
        for index in range(count)
    ]
    _map_scenes(_postprocess_worker, tasks, args.workers)
    if out_dir != in_dir:
        _write_manifest(out_dir, manifest)
    print(f"post-processed {count} scene(s) into {out_dir}")
    return 0


def _cmd_evaluate(args) -> int:
    pred_dir = Path(args.pred)
    gt_dir = Path(args.gt)
    manifest = _load_manifest(gt_dir)
    cfg = _config_from_manifest(args, manifest)
    spec = cfg.dataset
    spec_dict = config_mod.dataset_spec_to_dict(spec)
    count = _scene_count(manifest)
    tasks = [(str(pred_dir), str(gt_dir), spec_dict, index) for index in range(count)]
    results = _map_scenes(_evaluate_worker, tasks, args.workers)

    pq_acc = PqAccumulator(spec.num_classes)
    ap_acc = ApAccumulator()
    confusion = None
    for result in results:
        pq_acc.merge(result["pq"])
        ap_acc.merge(result["ap"])
        if result["confusion"] is not None:
            if confusion is None:
                confusion = ConfusionAccumulator(spec.num_classes)
            confusion.merge(result["confusion"])
    report = evaluation_report(
        pq_acc.report(spec),
        confusion.report() if confusion is not None else None,
        ap_acc.report(),
        extra={"scene_count": count},
    )
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_report(out_dir / "report.json", report)
    sys.stdout.write(format_report_table(report))
    return 0


def _cmd_roundtrip(args) -> int:
    cfg = config_mod.load_config(args.config)
    scene = cfg.scene
    if args.size is not None:
        scene = dataclasses.replace(scene, height=args.size[0], width=args.size[1])
    cfg = dataclasses.replace(cfg, scene=scene)
    tasks = [(cfg, args.seed, index) for index in range(args.scenes)]
    results = _map_scenes(_roundtrip_worker, tasks, args.workers)
    merged = pipeline.merge_scene_results(results, cfg.dataset)
    report = evaluation_report(
        merged["pq"],
        merged["iou"],
        merged["ap"],
        extra={"per_scene": merged["per_scene"], "scene_count": args.scenes},
    )
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_report(out_dir / "report.json", report)
    sys.stdout.write(format_report_table(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panoptic",
        description="Synthetic bottom-up panoptic segmentation pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="JSON config file")
        p.add_argument("--workers", type=int, default=1, help="process count for per-scene work")

    p = sub.add_parser("synth", help="generate ground-truth scenes")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=_parse_size, default=None, metavar="HxW")
    p.add_argument("--count", type=int, default=1, help="number of scenes")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("encode-targets", help="encode heatmap/offset targets")
    common(p)
    p.add_argument("--in", dest="in_dir", required=True, help="directory from synth")
    p.add_argument("--out", default=None, help="output directory (default: in place)")
    p.set_defaults(func=_cmd_encode_targets)

    p = sub.add_parser("perturb", help="add seeded noise to targets")
    common(p)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None, help="noise seed")
    p.add_argument("--flip-rate", type=float, default=None)
    p.add_argument("--heatmap-noise", type=float, default=None)
    p.add_argument("--offset-noise", type=float, default=None)
    p.set_defaults(func=_cmd_perturb)

    p = sub.add_parser("postprocess", help="predictions -> panoptic maps")
    common(p)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_postprocess)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    common(p)
    p.add_argument("--pred", required=True, help="directory with pred_panoptic files")
    p.add_argument("--gt", required=True, help="directory with gt files + manifest")
    p.add_argument("--out", default=None, help="directory for report.json")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("roundtrip", help="full pipeline in memory")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=_parse_size, default=None, metavar="HxW")
    p.add_argument("--scenes", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_roundtrip)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PanopticError, TensorFormatError, SceneGenerationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
