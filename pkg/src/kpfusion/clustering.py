"""PAM k-medoids partitioning of keypoints and pair-averaged silhouette refinement.

The partitioning follows the classical five steps: seeded random medoids,
nearest-medoid assignment, evaluation of every (medoid, non-medoid) swap,
adoption of the cheapest configuration, and repetition until the medoid set
stops changing.

Silhouettes are computed on consecutive point pairs inside each cluster.
For a pair ``(i, i+1)`` with own-cluster average distances ``x_i, x_j`` and
average distances ``y_i, y_j`` to the neighbouring cluster::

    S = ((y_i + y_j)/2 - (x_i + x_j)/2) / max((x_i + x_j)/2, (y_i + y_j)/2)

which lies in ``[-1, 1]`` and reduces to the classical silhouette when the
two points of a pair coincide.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from . import kernels
from .errors import FormatError, InvalidConfig, TooFewPoints
from .keypoints import KeypointSet

log = logging.getLogger(__name__)

FEATURE_SPACES = ("descriptor", "spatial", "descriptor+spatial")
METRICS = ("euclidean", "minkowski")


@dataclass(frozen=True)
class ClusterConfig:
    k: int = 4
    metric: str = "euclidean"
    minkowski_p: float = 2.0
    feature_space: str = "descriptor"
    spatial_weight: float = 0.01
    max_iterations: int = 100
    seed: int = 0
    silhouette_threshold: float = 0.0

    def __post_init__(self) -> None:
        if int(self.k) < 1:
            raise InvalidConfig("k must be >= 1")
        if self.metric not in METRICS:
            raise InvalidConfig(f"metric must be one of {METRICS}")
        if self.minkowski_p < 1:
            raise InvalidConfig("Minkowski p must be >= 1")
        if self.feature_space not in FEATURE_SPACES:
            raise InvalidConfig(f"feature_space must be one of {FEATURE_SPACES}")
        if self.spatial_weight < 0:
            raise InvalidConfig("spatial_weight must be >= 0")
        if int(self.max_iterations) < 1:
            raise InvalidConfig("max_iterations must be >= 1")
        if not (-1.0 <= self.silhouette_threshold <= 1.0):
            raise InvalidConfig("silhouette_threshold must lie in [-1, 1]")

    @property
    def p(self) -> float:
        return 2.0 if self.metric == "euclidean" else float(self.minkowski_p)


@dataclass(frozen=True, eq=False)
class Clustering:
    """Result of :func:`pam_cluster`, optionally scored and refined.

    ``medoid_indices`` is sorted ascending and cluster ``c`` is the cluster of
    ``medoid_indices[c]``.  ``silhouettes`` holds NaN until scored.
    """

    k: int
    medoid_indices: tuple[int, ...]
    assignments: np.ndarray
    total_cost: float
    silhouettes: np.ndarray
    excluded: np.ndarray
    degenerate: bool = False
    iterations: int = 0
    cost_history: tuple[float, ...] = ()
    singleton_clusters: tuple[int, ...] = ()
    rescinded_clusters: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return int(self.assignments.shape[0])

    @property
    def scored(self) -> bool:
        return not np.isnan(self.silhouettes).any()

    def members(self, cluster: int, retained_only: bool = False) -> np.ndarray:
        mask = self.assignments == cluster
        if retained_only:
            mask &= ~self.excluded
        return np.flatnonzero(mask)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Clustering):
            return NotImplemented
        return (
            self.k == other.k
            and self.medoid_indices == other.medoid_indices
            and np.array_equal(self.assignments, other.assignments)
            and self.total_cost == other.total_cost
            and np.array_equal(self.silhouettes, other.silhouettes, equal_nan=True)
            and np.array_equal(self.excluded, other.excluded)
            and self.degenerate == other.degenerate
        )

    __hash__ = None  # type: ignore[assignment]


def feature_matrix(kset: KeypointSet, config: ClusterConfig) -> np.ndarray:
    if config.feature_space == "descriptor":
        return kset.descriptors
    if config.feature_space == "spatial":
        return kset.xy
    return np.hstack([kset.descriptors, config.spatial_weight * kset.xy])


def distance_matrix(kset: KeypointSet, config: ClusterConfig) -> np.ndarray:
    feats = feature_matrix(kset, config)
    if config.p == 2.0:
        dist = cdist(feats, feats, "euclidean")
    else:
        dist = cdist(feats, feats, "minkowski", p=config.p)
    np.fill_diagonal(dist, 0.0)
    return np.ascontiguousarray(dist)


def _configuration(dist: np.ndarray, medoids: np.ndarray):
    labels, d1, d2 = kernels.nearest_medoids(dist, medoids)
    # coincident medoids: each medoid still owns itself
    labels[medoids] = np.arange(medoids.shape[0])
    return labels, d1, d2, float(np.sum(d1))


def pam_from_distances(dist: np.ndarray, k: int, seed: int = 0, max_iterations: int = 100):
    """Run PAM on a precomputed ``(n, n)`` dissimilarity matrix.

    Returns ``(medoids, labels, cost, iterations, cost_history)`` with
    ``medoids`` sorted ascending and ``labels`` indexing into it.
    """
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    n = dist.shape[0]
    if n < k:
        raise TooFewPoints(f"{n} points cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    medoids = np.sort(rng.choice(n, size=k, replace=False)).astype(np.int64)
    labels, d1, d2, cost = _configuration(dist, medoids)
    history = [cost]
    iterations = 0
    # relative slack so float-level ties cannot cycle
    slack = 1e-12
    while iterations < max_iterations and k < n:
        iterations += 1
        trial_cost, slot, cand = kernels.best_swap(dist, medoids, labels, d1, d2)
        if slot < 0 or not trial_cost < cost - slack * max(abs(cost), 1.0):
            break
        medoids[slot] = cand
        medoids.sort()
        labels, d1, d2, cost = _configuration(dist, medoids)
        history.append(cost)
    return medoids, labels, cost, iterations, tuple(history)


def pam_cluster(kset: KeypointSet, config: ClusterConfig | None = None) -> Clustering:
    config = config or ClusterConfig()
    n = len(kset)
    if n < config.k:
        raise TooFewPoints(f"{n} points cannot form {config.k} clusters")
    dist = distance_matrix(kset, config)
    degenerate = bool(n > 1 and not np.any(dist))
    medoids, labels, cost, iterations, history = pam_from_distances(
        dist, config.k, config.seed, config.max_iterations)
    if degenerate:
        log.warning("all %d points coincide in feature space; clustering is degenerate", n)
    labels = labels.copy()
    labels.setflags(write=False)
    return Clustering(
        k=config.k,
        medoid_indices=tuple(int(m) for m in medoids),
        assignments=labels,
        total_cost=cost,
        silhouettes=np.full(n, np.nan),
        excluded=np.zeros(n, dtype=bool),
        degenerate=degenerate,
        iterations=iterations,
        cost_history=history,
    )


def recompute_cost(dist: np.ndarray, clustering: Clustering) -> float:
    med = np.asarray(clustering.medoid_indices)
    return float(dist[np.arange(clustering.n), med[clustering.assignments]].sum())


# ---------------------------------------------------------------------------
# silhouettes


def canonical_order(dist: np.ndarray, members: np.ndarray, medoid: int) -> np.ndarray:
    """Cluster members sorted by distance to the medoid, ties by index."""
    members = np.sort(members)
    return members[np.argsort(dist[members, medoid], kind="stable")]


def pair_silhouette(x_a: float, x_b: float, y_a: float, y_b: float) -> float:
    own = (x_a + x_b) / 2.0
    other = (y_a + y_b) / 2.0
    denom = max(own, other)
    if denom <= 0.0:
        return 0.0
    return (other - own) / denom


def silhouettes_from_distances(dist: np.ndarray, assignments: np.ndarray, medoids: Sequence[int]):
    """Pair-averaged silhouette per point.

    Returns ``(scores, singleton_clusters)``.  Points of a single-member
    cluster, and every point when only one cluster exists, score 0.
    """
    assignments = np.asarray(assignments)
    k = len(medoids)
    n = assignments.shape[0]
    members = [np.flatnonzero(assignments == c) for c in range(k)]
    nonempty = [c for c in range(k) if members[c].size]
    # avg[i, c]: mean distance from i to members of c (excluding i itself)
    avg = np.full((n, k), np.inf)
    for c in nonempty:
        sums = dist[:, members[c]].sum(axis=1)
        avg[:, c] = sums / members[c].size
        own = members[c]
        if own.size > 1:
            avg[own, c] = sums[own] / (own.size - 1)
    scores = np.zeros(n)
    singletons = []
    for c in nonempty:
        own = members[c]
        if own.size == 1:
            singletons.append(c)
            continue
        others = [o for o in nonempty if o != c]
        if not others:
            continue
        order = canonical_order(dist, own, medoids[c])
        for start in range(0, order.size, 2):
            a = order[start]
            b = order[start + 1] if start + 1 < order.size else a
            pair_avg = avg[a, others] + avg[b, others]
            nb = others[int(np.argmin(pair_avg))]
            s = pair_silhouette(avg[a, c], avg[b, c], avg[a, nb], avg[b, nb])
            scores[a] = s
            scores[b] = s
    return scores, tuple(singletons)


def silhouette_scores(kset: KeypointSet, clustering: Clustering,
                      config: ClusterConfig | None = None) -> np.ndarray:
    return score_clustering(kset, clustering, config).silhouettes


def score_clustering(kset: KeypointSet, clustering: Clustering,
                     config: ClusterConfig | None = None) -> Clustering:
    """Return a copy of ``clustering`` carrying per-point silhouettes."""
    config = config or ClusterConfig(k=clustering.k)
    dist = distance_matrix(kset, config)
    scores, singletons = silhouettes_from_distances(dist, clustering.assignments, clustering.medoid_indices)
    if singletons:
        log.info("singleton clusters %s scored 0", singletons)
    scores.setflags(write=False)
    return replace(clustering, silhouettes=scores, singleton_clusters=singletons)


def refine_clusters(kset: KeypointSet, clustering: Clustering,
                    config: ClusterConfig | None = None, min_retained: int = 3) -> Clustering:
    """Exclude points whose silhouette falls strictly below the threshold.

    A cluster never drops below ``min_retained`` retained points (or its full
    size, if smaller): the best-scoring exclusions are rescinded first.
    """
    config = config or ClusterConfig(k=clustering.k)
    if not clustering.scored:
        clustering = score_clustering(kset, clustering, config)
    s = clustering.silhouettes
    excluded = s < config.silhouette_threshold
    rescinded = []
    for c in range(clustering.k):
        own = np.flatnonzero(clustering.assignments == c)
        need = min(min_retained, own.size)
        kept = int(np.count_nonzero(~excluded[own]))
        if kept >= need:
            continue
        cand = own[excluded[own]]
        cand = cand[np.lexsort((cand, -s[cand]))]
        excluded[cand[: need - kept]] = False
        rescinded.append(c)
    if rescinded:
        log.info("exclusions rescinded in clusters %s to keep %d points", rescinded, min_retained)
    excluded.setflags(write=False)
    return replace(clustering, excluded=excluded, rescinded_clusters=tuple(rescinded))


# ---------------------------------------------------------------------------
# .clu dump


def save_clustering(clustering: Clustering, path: str | Path) -> None:
    lines = [f"CLU1 {clustering.k} {clustering.n}"]
    for i in range(clustering.n):
        s = clustering.silhouettes[i]
        lines.append(f"{i} {int(clustering.assignments[i])} {repr(float(s))} {int(clustering.excluded[i])}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_clustering_dump(path: str | Path):
    """Parse a ``.clu`` file into ``(k, assignments, silhouettes, excluded)``."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    head = lines[0].split() if lines else []
    if len(head) != 3 or head[0] != "CLU1":
        raise FormatError("bad header, expected 'CLU1 k n'", line=1, path=str(path))
    k, n = int(head[1]), int(head[2])
    body = [ln.split() for ln in lines[1:] if ln.strip()]
    if len(body) != n:
        raise FormatError(f"expected {n} records, found {len(body)}", path=str(path))
    assignments = np.empty(n, dtype=np.int64)
    silhouettes = np.empty(n)
    excluded = np.empty(n, dtype=bool)
    for row, parts in enumerate(body):
        if len(parts) != 4 or int(parts[0]) != row:
            raise FormatError("expected 'index cluster_id silhouette excluded_flag'", line=row + 2, path=str(path))
        assignments[row] = int(parts[1])
        silhouettes[row] = float(parts[2])
        excluded[row] = parts[3] == "1"
    return k, assignments, silhouettes, excluded
