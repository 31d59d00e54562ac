"""Ground-truth target encoding for the instance branch.

Each thing instance is represented by its center of mass.  The center target
is a heatmap carrying an unnormalized 2-D Gaussian per instance (combined
pixelwise by maximum, peak amplitude 1); the offset target stores, at every
instance pixel, the 2-vector from the pixel to its instance's center.
Centers are kept at fractional coordinates; nothing is rounded during
encoding.  Void pixels contribute to neither target.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from panoptic import _kernels
from panoptic.core import (
    DatasetSpec,
    PanopticError,
    require_raster2d,
    validate_panoptic_map,
)


class EmptyInstanceError(PanopticError):
    """An instance with no pixels has no center of mass."""


@dataclass(frozen=True)
class EncoderParams:
    """Target-encoding knobs; ``sigma`` is the Gaussian std in pixels."""

    sigma: float = 8.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise PanopticError(f"sigma must be > 0, got {self.sigma}")


@dataclass(frozen=True)
class OffsetField:
    """Per-pixel (row, col) offsets to the owning instance center.

    ``offsets`` is (H, W, 2) float32 with channel 0 = row offset and channel
    1 = col offset; ``valid_mask`` is (H, W) bool, true exactly at pixels
    that belong to a thing instance.  Offsets are (0, 0) outside the mask.
    """

    offsets: np.ndarray
    valid_mask: np.ndarray

    def __post_init__(self):
        if self.offsets.shape[:2] != self.valid_mask.shape or self.offsets.shape[2:] != (2,):
            raise PanopticError(
                f"offsets {self.offsets.shape} and valid_mask {self.valid_mask.shape} disagree"
            )

    @property
    def height(self) -> int:
        return self.offsets.shape[0]

    @property
    def width(self) -> int:
        return self.offsets.shape[1]


def center_of_mass(instance_pixels) -> tuple[float, float]:
    """Arithmetic mean of (row, col) coordinates.

    Raises:
        EmptyInstanceError: on an empty pixel list.
    """
    coords = np.asarray(instance_pixels, dtype=np.float64)
    if coords.size == 0:
        raise EmptyInstanceError("instance has no pixels")
    coords = coords.reshape(-1, 2)
    mean = coords.mean(axis=0)
    return float(mean[0]), float(mean[1])


def _instance_regions(gt: np.ndarray, spec: DatasetSpec):
    """Yields (panoptic_id, flat pixel indices) per thing instance, id-sorted."""
    flat = gt.reshape(-1)
    order = np.argsort(flat, kind="stable")
    ids, starts = np.unique(flat[order], return_index=True)
    bounds = np.append(starts, flat.size)
    for i, panoptic_id in enumerate(ids):
        class_id = int(panoptic_id) // spec.label_divisor
        if class_id == spec.void_label or class_id not in spec.thing_classes:
            continue
        yield int(panoptic_id), order[bounds[i]:bounds[i + 1]]


def instance_centers_of_mass(gt: np.ndarray, spec: DatasetSpec) -> dict[int, tuple[float, float]]:
    """Fractional center of mass per thing instance, keyed by panoptic id."""
    width = gt.shape[1]
    centers = {}
    for panoptic_id, flat_idx in _instance_regions(gt, spec):
        rows = flat_idx // width
        cols = flat_idx % width
        centers[panoptic_id] = (float(rows.mean()), float(cols.mean()))
    return centers


def encode_center_heatmap(
    gt: np.ndarray, spec: DatasetSpec, params: EncoderParams = EncoderParams()
) -> np.ndarray:
    """Encodes instance centers as a Gaussian confidence heatmap.

    Every thing instance contributes exp(-((r-cr)^2 + (c-cc)^2) / (2 sigma^2))
    at each pixel, evaluated over the full image from the fractional center
    (cr, cc); overlapping contributions combine by pixelwise maximum.

    Args:
        gt: (H, W) uint32 panoptic map, valid against ``spec``.
        spec: dataset specification.
        params: encoder parameters.

    Returns:
        (H, W) float32 heatmap with values in [0, 1].
    """
    require_raster2d(gt, "gt")
    validate_panoptic_map(gt, spec)
    h, w = gt.shape
    centers = instance_centers_of_mass(gt, spec)
    center_arr = np.array(list(centers.values()), dtype=np.float64).reshape(-1, 2)
    return _kernels.encode_heatmap(np.ascontiguousarray(center_arr), h, w, params.sigma)


def encode_offsets(gt: np.ndarray, spec: DatasetSpec) -> OffsetField:
    """Encodes per-pixel offsets to each instance's center of mass.

    The valid mask is true exactly at pixels whose class is a thing class
    (void excluded); there the stored offset satisfies
    pixel + offset == center of mass, up to float32 rounding of the offset.

    Args:
        gt: (H, W) uint32 panoptic map, valid against ``spec``.
        spec: dataset specification.

    Returns:
        An :class:`OffsetField`.
    """
    require_raster2d(gt, "gt")
    validate_panoptic_map(gt, spec)
    h, w = gt.shape
    offsets = np.zeros((h, w, 2), dtype=np.float32)
    valid = np.zeros((h, w), dtype=bool)
    flat_valid = valid.reshape(-1)
    flat_offsets = offsets.reshape(-1, 2)
    for _, flat_idx in _instance_regions(gt, spec):
        rows = flat_idx // w
        cols = flat_idx % w
        cr = rows.mean()
        cc = cols.mean()
        flat_offsets[flat_idx, 0] = cr - rows
        flat_offsets[flat_idx, 1] = cc - cols
        flat_valid[flat_idx] = True
    return OffsetField(offsets=offsets, valid_mask=valid)


def encode_targets(
    gt: np.ndarray, spec: DatasetSpec, params: EncoderParams = EncoderParams()
) -> tuple[np.ndarray, OffsetField]:
    """Convenience wrapper producing both instance-branch targets."""
    return encode_center_heatmap(gt, spec, params), encode_offsets(gt, spec)
