"""Prediction perturbation: turns perfect targets into noisy "predictions".

Draw order is fixed (semantic flips, heatmap noise, offset noise) and every
draw happens even at zero rates, so the same seed produces the same
underlying noise across different magnitude settings.  That makes noise
sweeps paired experiments: scaling a std only scales the same draws.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from panoptic.core import DatasetSpec, PanopticError
from panoptic.harness.rng import make_rng
from panoptic.targets import OffsetField


@dataclass(frozen=True)
class NoiseConfig:
    semantic_flip_rate: float = 0.0
    heatmap_noise_std: float = 0.0
    offset_noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.semantic_flip_rate <= 1.0:
            raise PanopticError("semantic_flip_rate must lie in [0, 1]")
        if self.heatmap_noise_std < 0 or self.offset_noise_std < 0:
            raise PanopticError("noise stds must be >= 0")


def perturb_predictions(
    semantic: np.ndarray,
    heatmap: np.ndarray,
    offsets: OffsetField,
    noise: NoiseConfig,
    spec: DatasetSpec,
    stream: int = 0,
) -> tuple[np.ndarray, np.ndarray, OffsetField]:
    """Applies seeded noise to a (semantic, heatmap, offsets) triple.

    Semantic labels flip independently with the configured rate, each to a
    uniformly random other class; heatmap noise is additive Gaussian clamped
    back to [0, 1]; offset noise is additive Gaussian per channel.  Void
    semantic pixels never flip.  The inputs are not modified.  ``stream``
    selects an independent substream of the same seed (one per image).
    """
    h, w = semantic.shape
    rng = make_rng(noise.seed, stream=stream)

    flip_u = rng.random((h, w))
    # Adding 1..C-1 modulo C always lands on a different class.
    flip_step = rng.integers(1, spec.num_classes, size=(h, w))
    heat_noise = rng.standard_normal((h, w))
    offset_noise = rng.standard_normal((h, w, 2))

    semantic_out = np.asarray(semantic).copy()
    flip = (flip_u < noise.semantic_flip_rate) & (semantic_out != spec.void_label)
    semantic_out[flip] = (semantic_out[flip] + flip_step[flip]) % spec.num_classes

    heat = np.asarray(heatmap, dtype=np.float64) + noise.heatmap_noise_std * heat_noise
    heatmap_out = np.clip(heat, 0.0, 1.0).astype(np.float32)

    shifted = (
        np.asarray(offsets.offsets, dtype=np.float64)
        + noise.offset_noise_std * offset_noise
    ).astype(np.float32)
    return semantic_out, heatmap_out, OffsetField(shifted, offsets.valid_mask.copy())
