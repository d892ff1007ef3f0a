# cython: language_level=3
"""Compiled kernel implementations.

Same contract as the ``_numpy`` module, with the per-frame loops written
out in C. Keep the two files in sync; the cross-backend tests compare
them on random inputs.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

PROB_FLOOR = 1e-12

cdef double _PROB_FLOOR = 1e-12


def window_stack(features, long radius):
    """Stack a temporal context window around every frame.

    ``features`` is [D, T]; the result is [T, D*(2*radius+1)] float64 with
    window offsets ordered -radius..+radius and edge frames replicated.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] feats = np.ascontiguousarray(
        features, dtype=np.float64)
    cdef Py_ssize_t dim = feats.shape[0]
    cdef Py_ssize_t num_frames = feats.shape[1]
    cdef Py_ssize_t width = 2 * radius + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty(
        (num_frames, dim * width), dtype=np.float64)
    cdef Py_ssize_t t, w, d, src
    for t in range(num_frames):
        for w in range(width):
            src = t + w - radius
            if src < 0:
                src = 0
            elif src >= num_frames:
                src = num_frames - 1
            for d in range(dim):
                out[t, w * dim + d] = feats[d, src]
    return out


def softmax_xent_grad(logits, labels, weights):
    """Weighted softmax cross-entropy over a batch of frames.

    Returns ``(loss_sum, dlogits)``; see the numpy backend for the exact
    definition.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] lg = np.ascontiguousarray(
        logits, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] lab = np.ascontiguousarray(
        labels, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wt = np.ascontiguousarray(
        weights, dtype=np.float64)
    cdef Py_ssize_t n = lg.shape[0]
    cdef Py_ssize_t k = lg.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grad = np.empty((n, k), dtype=np.float64)
    cdef double loss_sum = 0.0
    cdef double row_max, denom, p, w
    cdef Py_ssize_t t, j, y
    for t in range(n):
        w = wt[t]
        y = lab[t]
        row_max = lg[t, 0]
        for j in range(1, k):
            if lg[t, j] > row_max:
                row_max = lg[t, j]
        denom = 0.0
        for j in range(k):
            grad[t, j] = exp(lg[t, j] - row_max)
            denom += grad[t, j]
        for j in range(k):
            p = grad[t, j] / denom
            if j == y:
                # p != p keeps NaN out of the floor so divergence stays visible
                loss_sum += w * -log(p if p > _PROB_FLOOR or p != p else _PROB_FLOOR)
                grad[t, j] = w * (p - 1.0)
            else:
                grad[t, j] = w * p
    return loss_sum, grad


def count_confusion_into(counts, truth, pred, prev):
    """Tally (truth, prediction, previous-action) triples into ``counts``."""
    cdef cnp.ndarray[cnp.int64_t, ndim=3] c = counts
    cdef cnp.ndarray[cnp.int64_t, ndim=1] tr = np.ascontiguousarray(
        truth, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pr = np.ascontiguousarray(
        pred, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pv = np.ascontiguousarray(
        prev, dtype=np.int64)
    cdef Py_ssize_t n = tr.shape[0]
    cdef Py_ssize_t t
    for t in range(n):
        c[tr[t], pr[t], pv[t]] += 1
    return counts


def levenshtein(a, b):
    """Unit-cost edit distance between two integer sequences."""
    cdef cnp.ndarray[cnp.int64_t, ndim=1] sa = np.ascontiguousarray(a, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] sb = np.ascontiguousarray(b, dtype=np.int64)
    cdef Py_ssize_t m = sa.shape[0]
    cdef Py_ssize_t n = sb.shape[0]
    if m == 0:
        return int(n)
    if n == 0:
        return int(m)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] row = np.arange(n + 1, dtype=np.int64)
    cdef Py_ssize_t i, j
    cdef long diag, up, best, cost
    for i in range(m):
        diag = row[0]
        row[0] = i + 1
        for j in range(1, n + 1):
            up = row[j]
            cost = 0 if sb[j - 1] == sa[i] else 1
            best = diag + cost
            if up + 1 < best:
                best = up + 1
            if row[j - 1] + 1 < best:
                best = row[j - 1] + 1
            row[j] = best
            diag = up
    return int(row[n])
