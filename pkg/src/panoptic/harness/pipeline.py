"""Per-scene pipeline steps shared by the CLI and the test suites.

Each function handles exactly one scene and returns plain picklable values,
so the CLI can fan scenes out to worker processes; accumulator merging
happens in scene order on the caller's side, keeping results independent of
the worker count.
"""
from __future__ import annotations

import dataclasses

import numpy as np

from panoptic.core import DatasetSpec
from panoptic.harness.config import HarnessConfig
from panoptic.harness.noise import perturb_predictions
from panoptic.harness.scenes import SceneConfig, generate_scene
from panoptic.metrics import (
    ApAccumulator,
    ConfusionAccumulator,
    PqAccumulator,
    instance_masks_from_panoptic,
)
from panoptic.postprocess import panoptic_inference
from panoptic.targets import encode_targets


def scene_config_for_index(scene: SceneConfig, base_seed: int, index: int) -> SceneConfig:
    """Scene ``index`` of a batch: same knobs, seed ``base_seed + index``."""
    return dataclasses.replace(scene, seed=base_seed + index)


def run_scene(
    scene: SceneConfig,
    config: HarnessConfig,
    noise_stream: int = 0,
    apply_noise: bool = True,
) -> dict:
    """Full pipeline for one scene: generate, encode, perturb, infer, score.

    Returns a dict of picklable pieces: the accumulators for PQ, confusion
    and AP plus a per-scene summary.
    """
    spec = config.dataset
    gt_panoptic, gt_semantic = generate_scene(scene, spec)
    heatmap, offsets = encode_targets(gt_panoptic, spec, config.encoder)
    if apply_noise:
        pred_semantic, pred_heatmap, pred_offsets = perturb_predictions(
            gt_semantic, heatmap, offsets, config.noise, spec, stream=noise_stream
        )
    else:
        pred_semantic, pred_heatmap, pred_offsets = gt_semantic, heatmap, offsets
    pred_panoptic = panoptic_inference(
        pred_semantic, pred_heatmap, pred_offsets, spec, config.postprocess
    )

    pq_acc = PqAccumulator(spec.num_classes)
    pq_acc.add_image(pred_panoptic, gt_panoptic, spec)
    confusion = ConfusionAccumulator(spec.num_classes)
    confusion.add_image(pred_semantic, gt_semantic, spec)
    ap_acc = ApAccumulator()
    ap_acc.add_image(
        instance_masks_from_panoptic(pred_panoptic, spec),
        [(c, m) for c, m, _ in instance_masks_from_panoptic(gt_panoptic, spec)],
    )
    return {
        "pq": pq_acc,
        "confusion": confusion,
        "ap": ap_acc,
        "summary": {"seed": scene.seed, "pq_all": pq_acc.report(spec).pq_all},
    }


def merge_scene_results(results: list[dict], spec: DatasetSpec) -> dict:
    """Merges per-scene accumulators (in list order) into one report input."""
    pq_acc = PqAccumulator(spec.num_classes)
    confusion = ConfusionAccumulator(spec.num_classes)
    ap_acc = ApAccumulator()
    summaries = []
    for result in results:
        pq_acc.merge(result["pq"])
        confusion.merge(result["confusion"])
        ap_acc.merge(result["ap"])
        summaries.append(result["summary"])
    return {
        "pq": pq_acc.report(spec),
        "iou": confusion.report(),
        "ap": ap_acc.report(),
        "per_scene": summaries,
    }


def mean_roundtrip_pq(
    config: HarnessConfig,
    seeds,
    offset_noise_std: float | None = None,
) -> float:
    """Mean pq_all over the given scene seeds, optionally overriding the
    offset noise level (used by noise-sweep experiments)."""
    noise = config.noise
    if offset_noise_std is not None:
        noise = dataclasses.replace(noise, offset_noise_std=offset_noise_std)
    cfg = dataclasses.replace(config, noise=noise)
    values = []
    for index, seed in enumerate(seeds):
        scene = dataclasses.replace(cfg.scene, seed=seed)
        result = run_scene(scene, cfg, noise_stream=index)
        values.append(result["summary"]["pq_all"])
    return float(np.mean(values))
