# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for k-medoids swap search and relaxation support.

Signatures mirror :mod:`kpfusion._pykernels`; sums run in plain index order.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def nearest_medoids(const double[:, ::1] dist, const cnp.int64_t[::1] medoids):
    """Nearest and second-nearest medoid distance for every point.

    Returns ``(labels, d1, d2)``; ``labels`` holds slot positions into
    ``medoids`` and ties go to the lower slot.
    """
    cdef Py_ssize_t n = dist.shape[0]
    cdef Py_ssize_t k = medoids.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] labels_a = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] d1_a = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] d2_a = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] labels = labels_a
    cdef double[::1] d1 = d1_a
    cdef double[::1] d2 = d2_a
    cdef Py_ssize_t o, s
    cdef double d, best, second
    cdef cnp.int64_t arg
    with nogil:
        for o in range(n):
            best = INFINITY
            second = INFINITY
            arg = 0
            for s in range(k):
                d = dist[o, medoids[s]]
                if d < best:
                    second = best
                    best = d
                    arg = s
                elif d < second:
                    second = d
            labels[o] = arg
            d1[o] = best
            d2[o] = second
    return labels_a, d1_a, d2_a


def best_swap(const double[:, ::1] dist, const cnp.int64_t[::1] medoids,
              const cnp.int64_t[::1] labels, const double[::1] d1, const double[::1] d2):
    """Cheapest single (medoid slot, non-medoid point) swap.

    Returns ``(cost, slot, candidate)``; the first minimum in (slot,
    candidate) order wins.
    """
    cdef Py_ssize_t n = dist.shape[0]
    cdef Py_ssize_t k = medoids.shape[0]
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] is_med_a = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] is_med = is_med_a
    cdef Py_ssize_t s, j, o
    cdef double total, base, dj, best_cost = INFINITY
    cdef cnp.int64_t best_slot = -1, best_cand = -1
    for s in range(k):
        is_med[medoids[s]] = 1
    with nogil:
        for s in range(k):
            for j in range(n):
                if is_med[j]:
                    continue
                total = 0.0
                for o in range(n):
                    base = d2[o] if labels[o] == s else d1[o]
                    dj = dist[o, j]
                    total += dj if dj < base else base
                if total < best_cost:
                    best_cost = total
                    best_slot = s
                    best_cand = j
    return best_cost, best_slot, best_cand


def relaxation_support(const double[:, :, :, ::1] compat, const double[:, ::1] prob):
    """``q[v, w] = sum_{a, b} compat[v, a, w, b] * prob[a, b]``."""
    cdef Py_ssize_t n = prob.shape[0]
    cdef cnp.ndarray[double, ndim=2] out_a = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_a
    cdef Py_ssize_t v, w, a, b
    cdef double acc
    with nogil:
        for v in range(n):
            for w in range(n):
                acc = 0.0
                for a in range(n):
                    for b in range(n):
                        acc += compat[v, a, w, b] * prob[a, b]
                out[v, w] = acc
    return out_a


def relaxation_iterate(const double[:, :, :, ::1] compat, prob_in, Py_ssize_t max_iters, double epsilon):
    """Run ``prob <- rownorm(prob * support)`` until the largest change is below ``epsilon``.

    Returns ``(prob, converged, iterations_used)``.  A row whose sum is not
    positive becomes uniform.
    """
    cdef cnp.ndarray[double, ndim=2] cur_a = np.array(prob_in, dtype=np.float64, order="C")
    cdef Py_ssize_t n = cur_a.shape[0]
    cdef cnp.ndarray[double, ndim=2] nxt_a = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] cur = cur_a
    cdef double[:, ::1] nxt = nxt_a
    cdef double[:, ::1] tmp
    cdef Py_ssize_t it, v, w, a, b, used = 0
    cdef double acc, row, change, d
    cdef bint converged = False
    with nogil:
        for it in range(max_iters):
            used = it + 1
            for v in range(n):
                for w in range(n):
                    acc = 0.0
                    for a in range(n):
                        for b in range(n):
                            acc += compat[v, a, w, b] * cur[a, b]
                    nxt[v, w] = cur[v, w] * acc
            change = 0.0
            for v in range(n):
                row = 0.0
                for w in range(n):
                    row += nxt[v, w]
                for w in range(n):
                    if row > 0.0:
                        nxt[v, w] = nxt[v, w] / row
                    else:
                        nxt[v, w] = 1.0 / n
                    d = nxt[v, w] - cur[v, w]
                    if d < 0.0:
                        d = -d
                    if d > change:
                        change = d
            tmp = cur
            cur = nxt
            nxt = tmp
            if change < epsilon:
                converged = True
                break
    return np.asarray(cur).copy(), bool(converged), int(used)
