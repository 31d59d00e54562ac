# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: tie-aware window NMS, nearest-center grouping and
Gaussian peak rendering.  Semantics mirror ``_fallback`` exactly; see the
docstrings there."""

from libc.math cimport exp, INFINITY

import numpy as np


def local_peak_mask(float[:, ::1] heatmap, int kernel):
    cdef Py_ssize_t h = heatmap.shape[0]
    cdef Py_ssize_t w = heatmap.shape[1]
    cdef int half = kernel // 2
    out = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] mask = out
    cdef Py_ssize_t r, c, rr, cc, r0, r1, c0, c1
    cdef float v, q
    cdef bint wins
    for r in range(h):
        r0 = r - half if r - half > 0 else 0
        r1 = r + half if r + half < h - 1 else h - 1
        for c in range(w):
            c0 = c - half if c - half > 0 else 0
            c1 = c + half if c + half < w - 1 else w - 1
            v = heatmap[r, c]
            wins = True
            for rr in range(r0, r1 + 1):
                for cc in range(c0, c1 + 1):
                    q = heatmap[rr, cc]
                    if q > v or (q == v and (rr < r or (rr == r and cc < c))):
                        wins = False
                        break
                if not wins:
                    break
            if wins:
                mask[r, c] = 1
    return out


def group_pixels(double[:, ::1] centers, float[:, :, ::1] offsets,
                 unsigned char[:, ::1] thing_mask):
    cdef Py_ssize_t h = thing_mask.shape[0]
    cdef Py_ssize_t w = thing_mask.shape[1]
    cdef Py_ssize_t n_centers = centers.shape[0]
    out = np.zeros((h, w), dtype=np.int32)
    cdef int[:, ::1] ids = out
    if n_centers == 0:
        return out
    cdef Py_ssize_t r, c, k, best_k
    cdef double qr, qc, dr, dc, d2, best
    for r in range(h):
        for c in range(w):
            if thing_mask[r, c] == 0:
                continue
            qr = r + <double> offsets[r, c, 0]
            qc = c + <double> offsets[r, c, 1]
            best = INFINITY
            best_k = 0
            for k in range(n_centers):
                dr = qr - centers[k, 0]
                dc = qc - centers[k, 1]
                d2 = dr * dr + dc * dc
                if d2 < best:
                    best = d2
                    best_k = k + 1
            ids[r, c] = best_k
    return out


def encode_heatmap(double[:, ::1] centers, Py_ssize_t height, Py_ssize_t width,
                   double sigma):
    cdef Py_ssize_t n_centers = centers.shape[0]
    acc_arr = np.zeros((height, width), dtype=np.float64)
    cdef double[:, ::1] acc = acc_arr
    cdef Py_ssize_t r, c, k
    cdef double dr, dc, g
    cdef double denom = 2.0 * sigma * sigma
    for k in range(n_centers):
        for r in range(height):
            dr = r - centers[k, 0]
            for c in range(width):
                dc = c - centers[k, 1]
                g = exp(-(dr * dr + dc * dc) / denom)
                if g > acc[r, c]:
                    acc[r, c] = g
    return acc_arr.astype(np.float32)
