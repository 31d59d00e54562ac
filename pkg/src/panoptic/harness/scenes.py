"""Synthetic desk-scale scenes: stuff-class background bands plus
non-overlapping rectangle or ellipse instances.

Placement uses rejection sampling; a candidate is resampled when it would
overlap an existing instance or put its center of mass too close to another
one.  Everything is driven by one Philox stream, so a seed fully determines
the scene.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from panoptic.core import DatasetSpec, PanopticError, encode_panoptic_id
from panoptic.harness.rng import make_rng


class SceneGenerationError(RuntimeError):
    """Instance placement failed after the retry cap."""


@dataclass(frozen=True)
class SceneConfig:
    """Knobs for one synthetic scene.

    ``stuff_classes`` become horizontal background bands, top to bottom;
    ``num_instances`` and ``size_range`` are inclusive ranges.
    ``min_center_separation`` keeps instance centers apart so center peaks
    stay distinguishable after Gaussian encoding.
    """

    height: int = 128
    width: int = 128
    num_instances: tuple[int, int] = (1, 6)
    shape_family: str = "rectangle"
    size_range: tuple[int, int] = (6, 20)
    stuff_classes: tuple[int, ...] = (0, 1, 2)
    thing_classes: tuple[int, ...] = (11, 12, 13, 14)
    min_center_separation: float = 16.0
    seed: int = 0
    max_retries: int = 100

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise PanopticError("scene must be at least 1x1")
        if self.shape_family not in ("rectangle", "ellipse"):
            raise PanopticError(f"unknown shape family {self.shape_family!r}")
        lo, hi = self.num_instances
        if lo < 0 or hi < lo:
            raise PanopticError(f"bad num_instances range {self.num_instances}")
        slo, shi = self.size_range
        if slo < 1 or shi < slo:
            raise PanopticError(f"bad size_range {self.size_range}")
        if not self.stuff_classes:
            raise PanopticError("at least one stuff background class is required")
        if hi > 0 and not self.thing_classes:
            raise PanopticError("thing classes required when instances are requested")


def _shape_mask(family: str, box_h: int, box_w: int) -> np.ndarray:
    if family == "rectangle":
        return np.ones((box_h, box_w), dtype=bool)
    rr = np.arange(box_h, dtype=np.float64)[:, None] - (box_h - 1) / 2.0
    cc = np.arange(box_w, dtype=np.float64)[None, :] - (box_w - 1) / 2.0
    return (rr / (box_h / 2.0)) ** 2 + (cc / (box_w / 2.0)) ** 2 <= 1.0


def generate_scene(config: SceneConfig, spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray]:
    """Generates one scene.

    Args:
        config: scene parameters (including the seed).
        spec: dataset specification; the config's classes must belong to it.

    Returns:
        (panoptic, semantic): a (H, W) uint32 panoptic map and the matching
        (H, W) int32 semantic raster.

    Raises:
        SceneGenerationError: when an instance cannot be placed within the
            retry cap.
    """
    unknown_stuff = set(config.stuff_classes) - spec.stuff_classes
    unknown_things = set(config.thing_classes) - spec.thing_classes
    if unknown_stuff:
        raise PanopticError(f"not stuff classes in this dataset: {sorted(unknown_stuff)}")
    if unknown_things:
        raise PanopticError(f"not thing classes in this dataset: {sorted(unknown_things)}")

    rng = make_rng(config.seed, stream=0)
    h, w = config.height, config.width
    semantic = np.empty((h, w), dtype=np.int32)
    n_bands = len(config.stuff_classes)
    edges = [h * i // n_bands for i in range(n_bands + 1)]
    for i, stuff_class in enumerate(config.stuff_classes):
        semantic[edges[i]:edges[i + 1], :] = stuff_class
    panoptic = semantic.astype(np.uint32) * np.uint32(spec.label_divisor)

    occupied = np.zeros((h, w), dtype=bool)
    centers: list[tuple[float, float]] = []
    per_class_count: dict[int, int] = {}

    lo, hi = config.num_instances
    n_instances = int(rng.integers(lo, hi + 1))
    slo, shi = config.size_range
    for index in range(n_instances):
        placed = False
        for _ in range(config.max_retries):
            class_id = int(config.thing_classes[rng.integers(len(config.thing_classes))])
            box_h = int(rng.integers(slo, shi + 1))
            box_w = int(rng.integers(slo, shi + 1))
            if box_h > h or box_w > w:
                continue
            r0 = int(rng.integers(0, h - box_h + 1))
            c0 = int(rng.integers(0, w - box_w + 1))
            mask = _shape_mask(config.shape_family, box_h, box_w)
            region = occupied[r0:r0 + box_h, c0:c0 + box_w]
            if np.any(region & mask):
                continue
            rows, cols = np.nonzero(mask)
            center = (r0 + rows.mean(), c0 + cols.mean())
            too_close = any(
                (center[0] - cr) ** 2 + (center[1] - cc) ** 2
                < config.min_center_separation ** 2
                for cr, cc in centers
            )
            if too_close:
                continue
            instance_id = per_class_count.get(class_id, 0) + 1
            per_class_count[class_id] = instance_id
            panoptic[r0 + rows, c0 + cols] = np.uint32(
                encode_panoptic_id(class_id, instance_id, spec)
            )
            semantic[r0 + rows, c0 + cols] = class_id
            region |= mask
            centers.append(center)
            placed = True
            break
        if not placed:
            raise SceneGenerationError(
                f"could not place instance {index + 1}/{n_instances} within "
                f"{config.max_retries} attempts ({h}x{w} scene, sizes {config.size_range}, "
                f"min separation {config.min_center_separation})"
            )
    return panoptic, semantic
