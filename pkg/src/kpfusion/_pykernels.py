"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``."""

from __future__ import annotations

import numpy as np


def nearest_medoids(dist: np.ndarray, medoids: np.ndarray):
    sub = dist[:, medoids]
    labels = np.argmin(sub, axis=1)
    d1 = sub[np.arange(sub.shape[0]), labels]
    if medoids.shape[0] > 1:
        masked = sub.copy()
        masked[np.arange(sub.shape[0]), labels] = np.inf
        d2 = masked.min(axis=1)
    else:
        d2 = np.full(sub.shape[0], np.inf)
    return labels.astype(np.int64), d1, d2


def best_swap(dist: np.ndarray, medoids: np.ndarray, labels: np.ndarray,
              d1: np.ndarray, d2: np.ndarray):
    best = (np.inf, -1, -1)
    is_med = np.zeros(dist.shape[0], dtype=bool)
    is_med[medoids] = True
    for s in range(medoids.shape[0]):
        base = np.where(labels == s, d2, d1)
        costs = np.minimum(base[:, None], dist).sum(axis=0)
        costs[is_med] = np.inf
        j = int(np.argmin(costs))
        if costs[j] < best[0]:
            best = (float(costs[j]), s, j)
    return best


def relaxation_support(compat: np.ndarray, prob: np.ndarray) -> np.ndarray:
    return np.einsum("vawb,ab->vw", compat, prob)


def row_normalize(prob: np.ndarray) -> np.ndarray:
    sums = prob.sum(axis=1, keepdims=True)
    zero = sums[:, 0] <= 0
    if zero.any():
        prob = prob.copy()
        prob[zero] = 1.0
        sums[zero] = prob.shape[1]
    return prob / sums


def relaxation_iterate(compat: np.ndarray, prob: np.ndarray, max_iters: int, epsilon: float):
    prob = np.array(prob, dtype=np.float64)
    used, converged = 0, False
    for used in range(1, max_iters + 1):
        updated = row_normalize(prob * relaxation_support(compat, prob))
        change = float(np.max(np.abs(updated - prob)))
        prob = updated
        if change < epsilon:
            converged = True
            break
    return prob, converged, used
