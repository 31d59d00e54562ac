"""Training objectives: semantic cross-entropy, center-heatmap regression
(MSE or sigmoid cross-entropy) and masked L1 offset regression.

Each loss returns its scalar value together with the analytic gradient with
respect to the prediction raster.  All reductions run in float64 with a fixed
summation order, so results are bit-reproducible regardless of caller
parallelism.  Normalization: cross-entropy averages over non-void pixels,
MSE over all pixels, L1 over valid pixels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from panoptic.core import PanopticError, require_same_shape
from panoptic.targets import OffsetField


class DegenerateInputError(PanopticError):
    """Loss support is empty (for example, every pixel is void)."""


@dataclass(frozen=True)
class LossResult:
    """Scalar loss value plus gradient w.r.t. the prediction input."""

    value: float
    gradient: np.ndarray


@dataclass(frozen=True)
class LossWeights:
    """Relative weights of the three objectives.

    The defaults balance typical magnitudes under this module's
    normalizations; sweepable, no claim of optimality.
    """

    w_semantic: float = 1.0
    w_heatmap: float = 200.0
    w_offset: float = 0.01

    def __post_init__(self):
        if min(self.w_semantic, self.w_heatmap, self.w_offset) < 0:
            raise PanopticError("loss weights must be >= 0")


def semantic_ce_loss(logits: np.ndarray, labels: np.ndarray, void_label: int) -> LossResult:
    """Softmax cross-entropy over non-void pixels.

    Args:
        logits: (H, W, C) float raster of per-class scores.
        labels: (H, W) integer class map; ``void_label`` pixels are skipped.
        void_label: ignore label.

    Returns:
        LossResult with gradient (softmax - onehot) / N_valid at non-void
        pixels, zero at void pixels.

    Raises:
        DegenerateInputError: if every pixel is void.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 3 or labels.shape != logits.shape[:2]:
        raise PanopticError(
            f"logits must be (H, W, C) with labels (H, W); got {logits.shape} and {labels.shape}"
        )
    num_classes = logits.shape[2]
    valid = labels != void_label
    if np.any(valid & ((labels < 0) | (labels >= num_classes))):
        raise PanopticError("labels outside [0, C) and not void")
    n_valid = int(np.count_nonzero(valid))
    if n_valid == 0:
        raise DegenerateInputError("all pixels are void; cross-entropy undefined")

    x = logits.astype(np.float64, copy=False)
    shifted = x - x.max(axis=2, keepdims=True)
    exp = np.exp(shifted)
    sum_exp = exp.sum(axis=2, keepdims=True)
    log_probs = shifted - np.log(sum_exp)
    softmax = exp / sum_exp

    safe_labels = np.where(valid, labels, 0)
    picked = np.take_along_axis(log_probs, safe_labels[:, :, None], axis=2)[:, :, 0]
    value = -float(picked[valid].sum()) / n_valid

    gradient = softmax.copy()
    rows, cols = np.nonzero(valid)
    gradient[rows, cols, labels[rows, cols]] -= 1.0
    gradient /= n_valid
    gradient[~valid] = 0.0
    return LossResult(value=value, gradient=gradient)


def heatmap_mse_loss(pred: np.ndarray, gt: np.ndarray) -> LossResult:
    """Mean squared error between predicted and encoded center heatmaps."""
    require_same_shape(pred, gt, "heatmaps")
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(gt, dtype=np.float64)
    n = diff.size
    value = float((diff * diff).sum()) / n
    return LossResult(value=value, gradient=2.0 * diff / n)


def heatmap_sigmoid_ce_loss(pred_logits: np.ndarray, gt: np.ndarray) -> LossResult:
    """Binary cross-entropy (from logits) against soft Gaussian targets.

    Per pixel with logit x and target g: softplus(x) - g * x, averaged over
    all pixels; the softplus is computed as max(x, 0) + log1p(exp(-|x|)) so
    large logits cannot overflow.
    """
    require_same_shape(pred_logits, gt, "heatmaps")
    g = np.asarray(gt, dtype=np.float64)
    if g.size and (g.min() < 0 or g.max() > 1):
        raise PanopticError("target heatmap values must lie in [0, 1]")
    x = np.asarray(pred_logits, dtype=np.float64)
    softplus = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    n = x.size
    value = float((softplus - g * x).sum()) / n
    sigmoid = 0.5 * (1.0 + np.tanh(0.5 * x))
    return LossResult(value=value, gradient=(sigmoid - g) / n)


def offset_l1_loss(pred: OffsetField, gt: OffsetField) -> LossResult:
    """L1 offset loss, activated only at ground-truth instance pixels.

    The ground truth carries the activation mask.  The gradient uses the
    sign(0) = 0 subgradient and is zero off the mask.  Normalizes by
    max(1, N_valid) so an empty mask yields loss 0.
    """
    require_same_shape(pred.offsets, gt.offsets, "offset fields")
    mask = np.asarray(gt.valid_mask, dtype=bool)
    diff = np.asarray(pred.offsets, dtype=np.float64) - np.asarray(gt.offsets, dtype=np.float64)
    diff[~mask] = 0.0
    n_valid = max(1, int(np.count_nonzero(mask)))
    value = float(np.abs(diff).sum()) / n_valid
    return LossResult(value=value, gradient=np.sign(diff) / n_valid)


def total_loss(
    semantic: LossResult, heatmap: LossResult, offset: LossResult, weights: LossWeights
) -> float:
    """Weighted sum of the three objective values."""
    return (
        weights.w_semantic * semantic.value
        + weights.w_heatmap * heatmap.value
        + weights.w_offset * offset.value
    )
