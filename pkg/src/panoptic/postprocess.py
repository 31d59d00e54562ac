"""Bottom-up inference: peak extraction, nearest-center grouping,
majority-vote fusion and the stuff-area void filter.

The pipeline is a pure per-image composition and is deterministic for fixed
inputs: every tie (equal peak values, equidistant centers, vote draws) breaks
by a documented ordering rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from panoptic import _kernels
from panoptic.core import (
    DatasetSpec,
    PanopticError,
    encode_panoptic_id,
    require_raster2d,
    require_same_shape,
)
from panoptic.targets import OffsetField


@dataclass(frozen=True)
class InstanceCenter:
    """A detected heatmap peak used as a grouping anchor."""

    row: int
    col: int
    score: float


@dataclass(frozen=True)
class PostprocessParams:
    """Peak-extraction knobs.

    ``nms_kernel`` is the odd side length of the window a peak must win;
    ``max_centers`` bounds the number of anchors kept per image.
    """

    center_threshold: float = 0.1
    nms_kernel: int = 7
    max_centers: int = 200

    def __post_init__(self):
        if not 0.0 <= self.center_threshold <= 1.0:
            raise PanopticError("center_threshold must lie in [0, 1]")
        if self.nms_kernel < 1 or self.nms_kernel % 2 == 0:
            raise PanopticError("nms_kernel must be odd and >= 1")
        if self.max_centers < 1:
            raise PanopticError("max_centers must be >= 1")


def find_instance_centers(
    heatmap: np.ndarray, params: PostprocessParams = PostprocessParams()
) -> list[InstanceCenter]:
    """Extracts instance centers from a confidence heatmap.

    A pixel becomes a center when its value reaches ``center_threshold`` and
    it wins its nms_kernel x nms_kernel window: no neighbor is strictly
    larger, and among equal-valued neighbors the lexicographically smallest
    (row, col) wins.  Centers are returned sorted by descending score, then
    ascending (row, col), truncated to ``max_centers``.
    """
    heatmap = require_raster2d(heatmap, "heatmap")
    heat = np.ascontiguousarray(heatmap, dtype=np.float32)
    peaks = _kernels.local_peak_mask(heat, params.nms_kernel)
    keep = (peaks != 0) & (heat >= np.float32(params.center_threshold))
    rows, cols = np.nonzero(keep)
    scores = heat[rows, cols]
    order = np.lexsort((cols, rows, -scores.astype(np.float64)))
    order = order[: params.max_centers]
    return [
        InstanceCenter(row=int(rows[i]), col=int(cols[i]), score=float(scores[i]))
        for i in order
    ]


def group_pixels(
    centers: list[InstanceCenter], offsets: OffsetField, thing_mask: np.ndarray
) -> np.ndarray:
    """Assigns foreground pixels to their closest predicted center.

    Each masked pixel p regresses to q = p + offset(p); it receives id k + 1
    for the center k minimizing the Euclidean distance ||q - center_k||, ties
    going to the lowest center index.  Pixels outside the mask, or every
    pixel when no centers exist, receive id 0.

    Returns:
        (H, W) int32 instance id map.
    """
    thing_mask = require_raster2d(thing_mask, "thing_mask")
    require_same_shape(thing_mask, offsets.valid_mask, "thing_mask and offsets")
    center_arr = np.array(
        [[c.row, c.col] for c in centers], dtype=np.float64
    ).reshape(-1, 2)
    return _kernels.group_pixels(
        np.ascontiguousarray(center_arr),
        np.ascontiguousarray(offsets.offsets, dtype=np.float32),
        np.ascontiguousarray(thing_mask, dtype=np.uint8),
    )


def majority_vote_fuse(
    semantic: np.ndarray, instances: np.ndarray, spec: DatasetSpec
) -> np.ndarray:
    """Fuses semantic prediction and instance grouping into a panoptic map.

    Every instance mask takes the thing class most frequent among its
    pixels' semantic labels (ties to the smaller class id) and a fresh
    instance id, dense per class in order of grouping id.  Stuff pixels
    (instance id 0) keep their class with instance 0.  Thing pixels that no
    center claimed become void.
    """
    semantic = require_raster2d(semantic, "semantic")
    require_same_shape(semantic, instances, "semantic and instances")
    h, w = semantic.shape
    divisor = np.uint32(spec.label_divisor)
    out = np.empty((h, w), dtype=np.uint32)

    bad = (semantic < 0) | ((semantic >= spec.num_classes) & (semantic != spec.void_label))
    if np.any(bad):
        raise PanopticError(f"semantic map contains unknown label {int(semantic[bad].flat[0])}")
    is_thing = np.isin(semantic, sorted(spec.thing_classes))

    # Stuff pixels keep their predicted class; unclaimed thing pixels are void.
    out[~is_thing] = semantic[~is_thing].astype(np.uint32) * divisor
    out[is_thing] = np.uint32(spec.void_id)

    next_instance = {}
    for instance_id in np.unique(instances):
        if instance_id == 0:
            continue
        mask = (instances == instance_id) & is_thing
        votes = semantic[mask]
        if votes.size == 0:
            continue
        counts = np.bincount(votes, minlength=spec.num_classes)
        voted_class = int(counts.argmax())
        fresh = next_instance.get(voted_class, 0) + 1
        next_instance[voted_class] = fresh
        out[mask] = np.uint32(encode_panoptic_id(voted_class, fresh, spec))
    return out


def stuff_area_filter(panoptic: np.ndarray, spec: DatasetSpec) -> np.ndarray:
    """Reassigns to void every stuff class occupying fewer pixels than the
    spec's stuff-area threshold.

    The area of a stuff "segment" is the total pixel count of that class in
    the image, not a connected component.  Thing segments pass through, and
    the filter is idempotent.
    """
    panoptic = require_raster2d(panoptic, "panoptic")
    out = panoptic.copy()
    classes = panoptic // np.uint32(spec.label_divisor)
    for stuff_class in sorted(spec.stuff_classes):
        mask = classes == stuff_class
        area = int(np.count_nonzero(mask))
        if 0 < area < spec.stuff_area_threshold:
            out[mask] = np.uint32(spec.void_id)
    return out


def panoptic_inference(
    semantic: np.ndarray,
    heatmap: np.ndarray,
    offsets: OffsetField,
    spec: DatasetSpec,
    params: PostprocessParams = PostprocessParams(),
) -> np.ndarray:
    """Full bottom-up inference for one image.

    Composition of center extraction, nearest-center grouping (with the
    foreground mask taken from the semantic prediction), majority-vote
    fusion and the stuff-area filter.

    Args:
        semantic: (H, W) integer argmax class map.
        heatmap: (H, W) float32 center confidence map.
        offsets: predicted offset field.
        spec: dataset specification.
        params: peak-extraction parameters.

    Returns:
        (H, W) uint32 panoptic map.
    """
    semantic = require_raster2d(semantic, "semantic")
    require_same_shape(semantic, heatmap, "semantic and heatmap")
    if offsets.offsets.shape[:2] != semantic.shape:
        raise PanopticError(
            f"offsets shape {offsets.offsets.shape} does not match image {semantic.shape}"
        )
    centers = find_instance_centers(heatmap, params)
    thing_mask = np.isin(semantic, sorted(spec.thing_classes))
    instances = group_pixels(centers, offsets, thing_mask)
    fused = majority_vote_fuse(semantic, instances, spec)
    return stuff_area_filter(fused, spec)
