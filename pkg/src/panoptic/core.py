"""Core raster conventions, dataset specification and panoptic id encoding.

Rasters are numpy arrays in row-major (C) order with (row, col) indexing and
the origin at the top-left pixel.  2-D rasters have shape (H, W); 3-D rasters
have shape (H, W, C) so the channel index is the fastest-varying one.  Pixel
centers sit at integer coordinates: pixel (r, c) is the point (r, c).

A panoptic map is a (H, W) uint32 raster whose entries pack a semantic class
and an instance id as ``class * label_divisor + instance``.  Stuff classes
always carry instance 0; the void id is ``void_label * label_divisor``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PANOPTIC_DTYPE = np.uint32


class PanopticError(ValueError):
    """Base class for validation errors raised by this package."""


class ShapeMismatchError(PanopticError):
    """Inputs that must share a shape do not."""


class EncodingOverflowError(PanopticError):
    """Instance id does not fit under the label divisor."""


class InvalidCombinationError(PanopticError):
    """Stuff class paired with a nonzero instance id."""


class InvalidPanopticIdError(PanopticError):
    """Panoptic id decodes to a class outside the dataset."""


@dataclass(frozen=True)
class DatasetSpec:
    """Class inventory and encoding constants for one dataset.

    Attributes:
        num_classes: Number of real semantic classes; valid class ids are
            0..num_classes-1.
        thing_classes: Ids of countable (instance-carrying) classes.
        stuff_classes: Ids of amorphous region classes.
        void_label: Sentinel class id outside 0..num_classes-1 marking
            ignored pixels.
        label_divisor: Multiplier packing (class, instance) into one id.
        stuff_area_threshold: Stuff segments smaller than this many pixels
            are reassigned to void during post-processing.
    """

    num_classes: int
    thing_classes: frozenset[int]
    stuff_classes: frozenset[int]
    void_label: int = 255
    label_divisor: int = 1000
    stuff_area_threshold: int = 2048

    def __post_init__(self):
        things = frozenset(self.thing_classes)
        stuff = frozenset(self.stuff_classes)
        object.__setattr__(self, "thing_classes", things)
        object.__setattr__(self, "stuff_classes", stuff)
        if self.num_classes < 1:
            raise PanopticError("num_classes must be >= 1")
        if things & stuff:
            raise PanopticError(f"thing/stuff overlap: {sorted(things & stuff)}")
        if things | stuff != frozenset(range(self.num_classes)):
            raise PanopticError(
                "thing_classes and stuff_classes must partition 0..num_classes-1"
            )
        if 0 <= self.void_label < self.num_classes:
            raise PanopticError("void_label must lie outside the class range")
        if self.label_divisor < 1:
            raise PanopticError("label_divisor must be positive")
        if self.stuff_area_threshold < 0:
            raise PanopticError("stuff_area_threshold must be >= 0")

    @property
    def void_id(self) -> int:
        """Packed panoptic id of the void region."""
        return self.void_label * self.label_divisor

    def is_thing(self, class_id: int) -> bool:
        return class_id in self.thing_classes


def cityscapes_like_spec(stuff_area_threshold: int = 2048) -> DatasetSpec:
    """A 19-class spec with 8 thing and 11 stuff classes.

    Mirrors the common urban-scenes class split (stuff ids 0..10, thing ids
    11..18) so synthetic experiments run against a realistic inventory.
    """
    return DatasetSpec(
        num_classes=19,
        thing_classes=frozenset(range(11, 19)),
        stuff_classes=frozenset(range(11)),
        void_label=255,
        label_divisor=1000,
        stuff_area_threshold=stuff_area_threshold,
    )


def encode_panoptic_id(class_id: int, instance_id: int, spec: DatasetSpec) -> int:
    """Packs (class, instance) into a single panoptic id.

    Raises:
        EncodingOverflowError: if ``instance_id`` does not fit under the
            label divisor.
        InvalidCombinationError: if a stuff class carries a nonzero instance.
        InvalidPanopticIdError: if ``class_id`` is neither a real class nor
            the void label.
    """
    if instance_id < 0 or instance_id >= spec.label_divisor:
        raise EncodingOverflowError(
            f"instance id {instance_id} outside [0, {spec.label_divisor})"
        )
    if class_id == spec.void_label:
        if instance_id != 0:
            raise InvalidCombinationError("void pixels cannot carry an instance id")
    elif class_id < 0 or class_id >= spec.num_classes:
        raise InvalidPanopticIdError(f"unknown class id {class_id}")
    elif class_id in spec.stuff_classes and instance_id != 0:
        raise InvalidCombinationError(
            f"stuff class {class_id} must have instance id 0, got {instance_id}"
        )
    return class_id * spec.label_divisor + instance_id


def decode_panoptic_id(panoptic_id: int, spec: DatasetSpec) -> tuple[int, int]:
    """Inverse of :func:`encode_panoptic_id` on its valid range."""
    class_id, instance_id = divmod(int(panoptic_id), spec.label_divisor)
    if class_id != spec.void_label and not 0 <= class_id < spec.num_classes:
        raise InvalidPanopticIdError(
            f"panoptic id {panoptic_id} decodes to unknown class {class_id}"
        )
    return class_id, instance_id


def panoptic_classes(panoptic: np.ndarray, spec: DatasetSpec) -> np.ndarray:
    """Per-pixel semantic class of a panoptic map (void stays void_label)."""
    return (panoptic // spec.label_divisor).astype(np.int32)


def panoptic_instances(panoptic: np.ndarray, spec: DatasetSpec) -> np.ndarray:
    """Per-pixel instance component of a panoptic map."""
    return (panoptic % spec.label_divisor).astype(np.int32)


def validate_panoptic_map(panoptic: np.ndarray, spec: DatasetSpec) -> None:
    """Checks every pixel of a panoptic map decodes against ``spec``.

    Raises:
        ShapeMismatchError: if the raster is not 2-D.
        InvalidPanopticIdError: on a class outside the inventory.
        InvalidCombinationError: on a stuff or void pixel with instance != 0.
    """
    require_raster2d(panoptic, "panoptic")
    classes = panoptic // np.uint32(spec.label_divisor)
    instances = panoptic % np.uint32(spec.label_divisor)
    real = classes < spec.num_classes
    void = classes == spec.void_label
    if not np.all(real | void):
        bad = int(classes[~(real | void)].flat[0])
        raise InvalidPanopticIdError(f"map contains unknown class {bad}")
    no_instance = void
    if spec.stuff_classes:
        no_instance = no_instance | np.isin(classes, sorted(spec.stuff_classes))
    if np.any(no_instance & (instances != 0)):
        raise InvalidCombinationError(
            "stuff or void pixels with nonzero instance component"
        )


def require_raster2d(arr: np.ndarray, name: str = "raster") -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatchError(f"{name} must be a non-empty (H, W) raster, got shape {arr.shape}")
    return arr


def require_raster3d(arr: np.ndarray, channels: int | None = None, name: str = "raster") -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ShapeMismatchError(f"{name} must be a non-empty (H, W, C) raster, got shape {arr.shape}")
    if channels is not None and arr.shape[2] != channels:
        raise ShapeMismatchError(
            f"{name} must have {channels} channels, got {arr.shape[2]}"
        )
    return arr


def require_same_shape(a: np.ndarray, b: np.ndarray, what: str = "inputs") -> None:
    if np.shape(a) != np.shape(b):
        raise ShapeMismatchError(f"{what} differ in shape: {np.shape(a)} vs {np.shape(b)}")
