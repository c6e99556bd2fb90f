"""Template distances and threshold verification.

Two scores are supported: Euclidean distance (accept when the best of the K
nearest gallery entries is within ``threshold``) and normalized correlation
``sum(f1*f2) / sqrt(sum(f1**2) * sum(f2**2))`` (accept when the best of the K
most similar entries reaches ``threshold``).  Correlation with an all-zero
template is undefined; it scores NaN and is never accepted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BadK, DimensionMismatch, EmptyGallery, InvalidConfig
from .fusion import FusedTemplate

KNN = "knn"
CORRELATION = "correlation"
METRICS = (KNN, CORRELATION)


def _vec(t) -> np.ndarray:
    return t.values if isinstance(t, FusedTemplate) else np.asarray(t, dtype=np.float64).reshape(-1)


def _pair(f1, f2):
    a, b = _vec(f1), _vec(f2)
    if a.shape != b.shape:
        raise DimensionMismatch(f"template lengths differ: {a.size} vs {b.size}")
    return a, b


def euclidean_distance(f1, f2) -> float:
    a, b = _pair(f1, f2)
    return float(np.linalg.norm(a - b))


def normalized_correlation(f1, f2) -> float:
    a, b = _pair(f1, f2)
    denom = math.sqrt(float(np.dot(a, a)) * float(np.dot(b, b)))
    if denom == 0.0:
        return math.nan
    return float(np.dot(a, b)) / denom


def score(metric: str, f1, f2) -> float:
    if metric == KNN:
        return euclidean_distance(f1, f2)
    if metric == CORRELATION:
        return normalized_correlation(f1, f2)
    raise InvalidConfig(f"unknown metric {metric!r}; expected one of {METRICS}")


@dataclass(frozen=True)
class MatchDecision:
    metric: str
    score: float
    best_subject_id: str
    accepted: bool
    threshold_used: float
    K_used: int
    neighbours: tuple[tuple[str, float], ...] = ()

    def line(self) -> str:
        verdict = "ACCEPT" if self.accepted else "REJECT"
        return f"{verdict} score={self.score!r} metric={self.metric} threshold={self.threshold_used!r}"


def _check_gallery(gallery: Sequence[FusedTemplate], K: int) -> None:
    if not gallery:
        raise EmptyGallery("gallery is empty")
    if not (1 <= K <= len(gallery)):
        raise BadK(f"K must lie in [1, {len(gallery)}], got {K}")


def knn_verify(probe: FusedTemplate, gallery: Sequence[FusedTemplate], K: int = 1,
               threshold: float = 0.5) -> MatchDecision:
    _check_gallery(gallery, K)
    scored = sorted(((euclidean_distance(probe, g), g.subject_id) for g in gallery),
                    key=lambda t: (t[0], t[1]))[:K]
    best, who = scored[0]
    return MatchDecision(KNN, best, who, best <= threshold, threshold, K,
                         tuple((s, d) for d, s in scored))


def correlation_verify(probe: FusedTemplate, gallery: Sequence[FusedTemplate], K: int = 1,
                       threshold: float = 0.9) -> MatchDecision:
    _check_gallery(gallery, K)
    raw = [(normalized_correlation(probe, g), g.subject_id) for g in gallery]
    # NaN (zero template) ranks below every real similarity
    scored = sorted(raw, key=lambda t: (-t[0] if not math.isnan(t[0]) else math.inf, t[1]))[:K]
    best, who = scored[0]
    accepted = (not math.isnan(best)) and best >= threshold
    return MatchDecision(CORRELATION, best, who, accepted, threshold, K,
                         tuple((s, d) for d, s in scored))


def verify(metric: str, probe: FusedTemplate, gallery: Sequence[FusedTemplate], K: int,
           threshold: float) -> MatchDecision:
    if metric == KNN:
        return knn_verify(probe, gallery, K, threshold)
    if metric == CORRELATION:
        return correlation_verify(probe, gallery, K, threshold)
    raise InvalidConfig(f"unknown metric {metric!r}; expected one of {METRICS}")
