"""Keypoint correspondences between one face cluster and one palm cluster.

Every point of the larger side claims its nearest descriptor on the smaller
side.  When several points claim the same target, only the claim with the
smallest distance survives and the rest are dropped (never rematched).
Claims failing the nearest/second-nearest ratio test are rejected before the
contest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import EmptyCluster, InvalidConfig
from .keypoints import DESCRIPTOR_LENGTH

PADDED = -1


@dataclass(frozen=True, eq=False)
class ClusterView:
    """Retained keypoints of one cluster, addressed by their set indices."""

    cluster_id: int
    indices: np.ndarray
    xy: np.ndarray
    descriptors: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "xy", np.asarray(self.xy, dtype=np.float64).reshape(-1, 2))
        object.__setattr__(self, "descriptors",
                           np.asarray(self.descriptors, dtype=np.float64).reshape(-1, DESCRIPTOR_LENGTH))

    @classmethod
    def from_set(cls, kset, indices, cluster_id: int = 0) -> "ClusterView":
        idx = np.asarray(indices, dtype=np.int64)
        return cls(cluster_id, idx, kset.xy[idx], kset.descriptors[idx])

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def locate(self, index: int) -> int:
        pos = np.flatnonzero(self.indices == index)
        if pos.size == 0:
            raise KeyError(index)
        return int(pos[0])


@dataclass(frozen=True)
class PointCorrespondence:
    face_index: int
    palm_index: int
    pair_distance: float
    padded: bool = False

    def __post_init__(self) -> None:
        if not self.pair_distance >= 0:
            raise ValueError("pair_distance must be >= 0")


@dataclass(frozen=True)
class CorrespondenceSet:
    pairs: tuple[PointCorrespondence, ...]
    face_cluster_id: int = 0
    palm_cluster_id: int = 0

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def padded_count(self) -> int:
        return sum(1 for p in self.pairs if p.padded)


def descriptor_distances(face: ClusterView, palm: ClusterView) -> np.ndarray:
    return cdist(face.descriptors, palm.descriptors, "euclidean")


def _claims(dist: np.ndarray, ratio_threshold: float):
    """Nearest-column claim of every row, filtered by the ratio test."""
    rows, cols = dist.shape
    target = np.argmin(dist, axis=1)
    d1 = dist[np.arange(rows), target]
    keep = np.ones(rows, dtype=bool)
    if cols > 1:
        part = np.partition(dist, 1, axis=1)
        d2 = part[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(d2 > 0, d1 / d2, np.where(d1 > 0, np.inf, 1.0))
        keep = ratio <= ratio_threshold
    return target, d1, keep


def match_clusters(face: ClusterView, palm: ClusterView, ratio_threshold: float = 0.8) -> CorrespondenceSet:
    if len(face) == 0 or len(palm) == 0:
        raise EmptyCluster("cannot match an empty cluster")
    if ratio_threshold <= 0:
        raise InvalidConfig("ratio_threshold must be > 0")
    dist = descriptor_distances(face, palm)
    swapped = len(palm) > len(face)
    claim_dist = dist.T if swapped else dist
    target, d1, keep = _claims(claim_dist, ratio_threshold)
    winners: dict[int, int] = {}
    for src in range(claim_dist.shape[0]):
        if not keep[src]:
            continue
        t = int(target[src])
        best = winners.get(t)
        if best is None or d1[src] < d1[best]:
            winners[t] = src
    pairs = []
    for t, src in winners.items():
        f, p = (t, src) if swapped else (src, t)
        pairs.append(PointCorrespondence(int(face.indices[f]), int(palm.indices[p]), float(dist[f, p])))
    pairs.sort(key=lambda c: c.face_index)
    return CorrespondenceSet(tuple(pairs), face.cluster_id, palm.cluster_id)


def equalize(cs: CorrespondenceSet, p: int = 8) -> CorrespondenceSet:
    """Keep the ``p`` closest pairs (ties by face index), pad with sentinels to exactly ``p``.

    Output is ordered by ascending face index with padded sentinels last.
    """
    if p < 3:
        raise InvalidConfig("p must be >= 3")
    real = [c for c in cs.pairs if not c.padded]
    real.sort(key=lambda c: (c.pair_distance, c.face_index))
    kept = sorted(real[:p], key=lambda c: c.face_index)
    pads = [PointCorrespondence(PADDED, PADDED, 0.0, padded=True)] * (p - len(kept))
    return CorrespondenceSet(tuple(kept + pads), cs.face_cluster_id, cs.palm_cluster_id)


def vertex_arrays(cs: CorrespondenceSet, face: ClusterView, palm: ClusterView):
    """Positions and descriptors of both sides, one row per pair, sentinels at the origin with zero descriptors."""
    m = len(cs)
    out = {}
    for side, view, attr in (("face", face, "face_index"), ("palm", palm, "palm_index")):
        xy = np.zeros((m, 2))
        desc = np.zeros((m, DESCRIPTOR_LENGTH))
        idx = np.full(m, PADDED, dtype=np.int64)
        for j, c in enumerate(cs.pairs):
            if c.padded:
                continue
            pos = view.locate(getattr(c, attr))
            xy[j] = view.xy[pos]
            desc[j] = view.descriptors[pos]
            idx[j] = view.indices[pos]
        out[side] = (idx, xy, desc)
    return out["face"], out["palm"]
