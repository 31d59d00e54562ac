"""Numpy/scipy implementations of the hot kernels.

Used when the compiled extension is unavailable.  Every function here is the
semantic twin of its counterpart in ``_native.pyx``: identical inputs produce
identical integer outputs, and float outputs agree to within one or two ulps
(libm vs numpy transcendental rounding).
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage


def local_peak_mask(heatmap: np.ndarray, kernel: int) -> np.ndarray:
    """Marks pixels that win their kernel x kernel neighborhood.

    A pixel wins if no neighbor has a strictly larger value and no neighbor
    with an equal value precedes it in (row, col) lexicographic order.

    Args:
        heatmap: (H, W) float32 raster.
        kernel: odd window size >= 1.

    Returns:
        (H, W) uint8 mask, 1 at winning pixels.
    """
    h, w = heatmap.shape
    flat = heatmap.reshape(-1)
    # Total order: higher value wins, equal values won by the smaller
    # (row, col). Sorting ascending by (value, -lex) makes the winner of any
    # subset the pixel with the largest rank, so windowed tie-aware NMS
    # reduces to an exact integer maximum filter over the ranks.
    lex = np.arange(h * w, dtype=np.int64)
    order = np.lexsort((-lex, flat))
    ranks = np.empty(h * w, dtype=np.int64)
    ranks[order] = np.arange(h * w, dtype=np.int64)
    ranks = ranks.reshape(h, w)
    win_max = ndimage.maximum_filter(ranks, size=kernel, mode="constant", cval=-1)
    return (ranks == win_max).astype(np.uint8)


def group_pixels(centers: np.ndarray, offsets: np.ndarray, thing_mask: np.ndarray) -> np.ndarray:
    """Assigns each masked pixel to the nearest center after offset regression.

    Args:
        centers: (K, 2) float64 center coordinates, (row, col).
        offsets: (H, W, 2) float32 regression field, channel 0 = row.
        thing_mask: (H, W) uint8/bool foreground mask.

    Returns:
        (H, W) int32 map of instance ids; 0 outside the mask or when K = 0,
        otherwise k + 1 where k is the index of the nearest center (ties go
        to the lowest index).
    """
    h, w = thing_mask.shape
    ids = np.zeros((h, w), dtype=np.int32)
    if centers.shape[0] == 0:
        return ids
    qr = np.arange(h, dtype=np.float64)[:, None] + offsets[:, :, 0].astype(np.float64)
    qc = np.arange(w, dtype=np.float64)[None, :] + offsets[:, :, 1].astype(np.float64)
    best = np.full((h, w), np.inf, dtype=np.float64)
    assigned = np.zeros((h, w), dtype=np.int32)
    for k in range(centers.shape[0]):
        dr = qr - centers[k, 0]
        dc = qc - centers[k, 1]
        d2 = dr * dr + dc * dc
        closer = d2 < best
        best[closer] = d2[closer]
        assigned[closer] = k + 1
    mask = np.asarray(thing_mask, dtype=bool)
    ids[mask] = assigned[mask]
    return ids


def encode_heatmap(centers: np.ndarray, height: int, width: int, sigma: float) -> np.ndarray:
    """Renders unnormalized Gaussians at ``centers``, combined pixelwise by max.

    Args:
        centers: (K, 2) float64 fractional centers, (row, col).
        height, width: output raster size.
        sigma: Gaussian standard deviation in pixels.

    Returns:
        (H, W) float32 heatmap with per-peak amplitude 1.
    """
    acc = np.zeros((height, width), dtype=np.float64)
    rows = np.arange(height, dtype=np.float64)[:, None]
    cols = np.arange(width, dtype=np.float64)[None, :]
    denom = 2.0 * sigma * sigma
    for k in range(centers.shape[0]):
        dr = rows - centers[k, 0]
        dc = cols - centers[k, 1]
        np.maximum(acc, np.exp(-(dr * dr + dc * dc) / denom), out=acc)
    return acc.astype(np.float32)
