"""Complete keypoint graphs, relaxation-labelling vertex mapping and cluster pairing.

A cluster graph has one vertex per retained keypoint and an edge between
every pair of vertices weighted by spatial distance.  For two graphs of equal
order every bijection preserves adjacency, so mappings are ranked by their
distortion::

    sum_{v<v'} |len(v, v') - len(f(v), f(v'))| + lambda_desc * sum_v ||desc(v) - desc(f(v))||

The mapping itself is found with probabilistic relaxation labelling over an
``n x n`` row-stochastic assignment matrix, then read off greedily.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from . import _pykernels, kernels
from .correspondence import ClusterView, CorrespondenceSet, equalize, match_clusters, vertex_arrays
from .errors import ClusterCountMismatch, FormatError, InvalidConfig, SizeMismatch, TooFewVertices
from .keypoints import DESCRIPTOR_LENGTH

log = logging.getLogger(__name__)

EXHAUSTIVE_ASSIGNMENT_LIMIT = 8


@dataclass(frozen=True, eq=False)
class ClusterGraph:
    xy: np.ndarray
    descriptors: np.ndarray
    indices: np.ndarray
    edge_length: np.ndarray

    @property
    def order(self) -> int:
        return int(self.xy.shape[0])

    @property
    def padded(self) -> np.ndarray:
        return self.indices < 0

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(itertools.combinations(range(self.order), 2))


def build_graph(xy, descriptors=None, indices=None) -> ClusterGraph:
    """Complete graph over the given vertex positions.

    ``xy`` may also be a :class:`ClusterView`, whose positions, descriptors and
    indices are used.
    """
    if isinstance(xy, ClusterView):
        xy, descriptors, indices = xy.xy, xy.descriptors, xy.indices
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    n = xy.shape[0]
    if n < 3:
        raise TooFewVertices(f"a cluster graph needs >= 3 vertices, got {n}")
    if descriptors is None:
        descriptors = np.zeros((n, DESCRIPTOR_LENGTH))
    descriptors = np.asarray(descriptors, dtype=np.float64).reshape(n, -1)
    if indices is None:
        indices = np.arange(n)
    lengths = cdist(xy, xy, "euclidean")
    np.fill_diagonal(lengths, 0.0)
    for arr in (xy, descriptors, lengths):
        arr.setflags(write=False)
    return ClusterGraph(xy, descriptors, np.asarray(indices, dtype=np.int64), lengths)


@dataclass(frozen=True)
class RelaxationConfig:
    sigma_edge: float = 10.0
    lambda_desc: float = 0.5
    max_iters: int = 50
    epsilon: float = 1e-4
    seed: int = 0
    init_boost: float = 1.0

    def __post_init__(self) -> None:
        if not self.sigma_edge > 0:
            raise InvalidConfig("sigma_edge must be > 0")
        if self.lambda_desc < 0:
            raise InvalidConfig("lambda_desc must be >= 0")
        if int(self.max_iters) < 1:
            raise InvalidConfig("max_iters must be >= 1")
        if not self.epsilon > 0:
            raise InvalidConfig("epsilon must be > 0")
        if self.init_boost < 0:
            raise InvalidConfig("init_boost must be >= 0")


@dataclass(frozen=True, eq=False)
class IsomorphicMapping:
    mapping: np.ndarray
    distortion_cost: float
    converged: bool
    iterations_used: int
    probabilities: np.ndarray | None = None

    def __post_init__(self) -> None:
        m = np.asarray(self.mapping, dtype=np.int64)
        if not np.array_equal(np.sort(m), np.arange(m.size)):
            raise ValueError("mapping is not a bijection")
        m.setflags(write=False)
        object.__setattr__(self, "mapping", m)

    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.mapping)
        inv[self.mapping] = np.arange(self.mapping.size)
        return inv

    def preserves_adjacency(self, face_g: ClusterGraph, palm_g: ClusterGraph) -> bool:
        # complete graphs: adjacency means "distinct vertices"
        f = self.mapping
        n = f.size
        adj_f = ~np.eye(n, dtype=bool)
        adj_p = ~np.eye(palm_g.order, dtype=bool)
        return bool(np.array_equal(adj_f, adj_p[np.ix_(f, f)]))


def distortion_cost(face_g: ClusterGraph, palm_g: ClusterGraph, mapping, lambda_desc: float = 0.5) -> float:
    f = np.asarray(mapping, dtype=np.int64)
    n = face_g.order
    iu = np.triu_indices(n, 1)
    edge_term = np.abs(face_g.edge_length[iu] - palm_g.edge_length[np.ix_(f, f)][iu]).sum()
    desc_term = np.linalg.norm(face_g.descriptors - palm_g.descriptors[f], axis=1).sum()
    return float(edge_term + lambda_desc * desc_term)


def compatibility(face_g: ClusterGraph, palm_g: ClusterGraph, sigma_edge: float) -> np.ndarray:
    """``C[v, a, w, b] = exp(-|len(v,a) - len(w,b)| / sigma)`` with ``a == v`` or ``b == w`` zeroed."""
    n = face_g.order
    diff = np.abs(face_g.edge_length[:, :, None, None] - palm_g.edge_length[None, None, :, :])
    compat = np.exp(-diff / sigma_edge)
    idx = np.arange(n)
    compat[idx, idx, :, :] = 0.0
    compat[:, :, idx, idx] = 0.0
    return np.ascontiguousarray(compat)


_row_normalize = _pykernels.row_normalize


def initial_probabilities(face_g: ClusterGraph, palm_g: ClusterGraph,
                          init: Iterable[tuple[int, int]] | None, init_boost: float) -> np.ndarray:
    dd = cdist(face_g.descriptors, palm_g.descriptors, "euclidean")
    scale = float(dd.mean())
    if not scale > 0:
        scale = 1.0
    prob = np.exp(-dd / scale)
    if init is not None:
        for v, w in init:
            prob[v, w] *= 1.0 + init_boost
    return _row_normalize(prob)


def greedy_extract(prob: np.ndarray) -> np.ndarray:
    """Bijection read off by repeatedly fixing the global maximum (ties to lowest row, then column)."""
    n = prob.shape[0]
    work = np.array(prob, dtype=np.float64)
    mapping = np.full(n, -1, dtype=np.int64)
    for _ in range(n):
        flat = int(np.argmax(work))
        v, w = divmod(flat, n)
        mapping[v] = w
        work[v, :] = -np.inf
        work[:, w] = -np.inf
    return mapping


def _as_vertex_pairs(init) -> list[tuple[int, int]] | None:
    if init is None:
        return None
    if isinstance(init, CorrespondenceSet):
        # vertex j of both graphs was built from pair j
        return [(j, j) for j in range(len(init))]
    return [(int(v), int(w)) for v, w in init]


def best_mapping(face_g: ClusterGraph, palm_g: ClusterGraph, init=None,
                 config: RelaxationConfig | None = None) -> IsomorphicMapping:
    """Relaxation-labelling search for the least-distorted vertex bijection.

    ``init`` is either the :class:`CorrespondenceSet` the two graphs were
    built from (pair ``j`` is vertex ``j`` on both sides) or an iterable of
    ``(face_vertex, palm_vertex)`` pairs given extra initial mass.
    """
    config = config or RelaxationConfig()
    n = face_g.order
    if palm_g.order != n:
        raise SizeMismatch(f"graph orders differ: {n} vs {palm_g.order}")
    prob = initial_probabilities(face_g, palm_g, _as_vertex_pairs(init), config.init_boost)
    compat = compatibility(face_g, palm_g, config.sigma_edge)
    prob, converged, used = kernels.relaxation_iterate(compat, prob, config.max_iters, config.epsilon)
    mapping = greedy_extract(prob)
    cost = distortion_cost(face_g, palm_g, mapping, config.lambda_desc)
    return IsomorphicMapping(mapping, cost, converged, used, prob)


def exhaustive_mapping(face_g: ClusterGraph, palm_g: ClusterGraph, lambda_desc: float = 0.5):
    """Minimum-distortion bijection by enumerating all ``n!`` permutations."""
    n = face_g.order
    if palm_g.order != n:
        raise SizeMismatch(f"graph orders differ: {n} vs {palm_g.order}")
    best_cost, best_perm = math.inf, None
    for perm in itertools.permutations(range(n)):
        c = distortion_cost(face_g, palm_g, perm, lambda_desc)
        if c < best_cost:
            best_cost, best_perm = c, np.array(perm)
    return best_perm, best_cost


# ---------------------------------------------------------------------------
# cluster-to-cluster assignment


def solve_assignment(cost: np.ndarray) -> np.ndarray:
    """Exact minimum-cost perfect assignment; ``result[i]`` is the column of row ``i``.

    Small problems are enumerated (first minimum in lexicographic order wins);
    larger ones go to the Hungarian solver.
    """
    cost = np.asarray(cost, dtype=np.float64)
    k = cost.shape[0]
    if cost.shape != (k, k):
        raise ClusterCountMismatch(f"cost matrix must be square, got {cost.shape}")
    if k <= EXHAUSTIVE_ASSIGNMENT_LIMIT:
        perms = np.array(list(itertools.permutations(range(k))), dtype=np.int64).reshape(-1, k)
        totals = cost[np.arange(k), perms].sum(axis=1)
        return perms[int(np.argmin(totals))]
    rows, cols = linear_sum_assignment(cost)
    out = np.empty(k, dtype=np.int64)
    out[rows] = cols
    return out


@dataclass(frozen=True, eq=False)
class ClusterPairing:
    face_cluster_id: int
    palm_cluster_id: int
    correspondence: CorrespondenceSet
    face_graph: ClusterGraph
    palm_graph: ClusterGraph
    mapping: IsomorphicMapping
    cost: float

    @property
    def padded_count(self) -> int:
        return self.correspondence.padded_count


def pair_clusters(face: ClusterView, palm: ClusterView, p: int, ratio_threshold: float,
                  config: RelaxationConfig, pad_penalty: float) -> ClusterPairing:
    """Correspond, equalize, build graphs and map one (face cluster, palm cluster) candidate."""
    cs = equalize(match_clusters(face, palm, ratio_threshold), p)
    (fi, fxy, fdesc), (pi, pxy, pdesc) = vertex_arrays(cs, face, palm)
    fg = build_graph(fxy, fdesc, fi)
    pg = build_graph(pxy, pdesc, pi)
    mapping = best_mapping(fg, pg, cs, config)
    cost = mapping.distortion_cost + pad_penalty * cs.padded_count
    return ClusterPairing(face.cluster_id, palm.cluster_id, cs, fg, pg, mapping, cost)


def assign_cluster_pairs(face_clusters: Sequence[ClusterView], palm_clusters: Sequence[ClusterView],
                         config: RelaxationConfig | None = None, p: int = 8,
                         ratio_threshold: float = 0.8, pad_penalty: float = 0.0) -> list[ClusterPairing]:
    """Pair every face cluster with a distinct palm cluster at minimum total cost.

    Returned pairings follow the order of ``face_clusters``.
    """
    config = config or RelaxationConfig()
    k = len(face_clusters)
    if len(palm_clusters) != k:
        raise ClusterCountMismatch(f"{k} face clusters vs {len(palm_clusters)} palm clusters")
    candidates = [[pair_clusters(f, q, p, ratio_threshold, config, pad_penalty) for q in palm_clusters]
                  for f in face_clusters]
    cost = np.array([[c.cost for c in row] for row in candidates]).reshape(k, k)
    choice = solve_assignment(cost)
    return [candidates[i][int(choice[i])] for i in range(k)]


# ---------------------------------------------------------------------------
# .map dump


def save_mapping(mapping: IsomorphicMapping, path: str | Path) -> None:
    lines = [f"{v} {int(w)}" for v, w in enumerate(mapping.mapping)]
    lines.append(f"cost {repr(float(mapping.distortion_cost))} converged {int(mapping.converged)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_mapping(path: str | Path) -> tuple[np.ndarray, float, bool]:
    lines = [ln.split() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines or len(lines[-1]) != 4 or lines[-1][0] != "cost" or lines[-1][2] != "converged":
        raise FormatError("missing trailing 'cost <value> converged <0|1>' line", path=str(path))
    pairs = []
    for lineno, parts in enumerate(lines[:-1], start=1):
        if len(parts) != 2:
            raise FormatError("expected 'face_vertex palm_vertex'", line=lineno, path=str(path))
        pairs.append((int(parts[0]), int(parts[1])))
    mapping = np.empty(len(pairs), dtype=np.int64)
    for v, w in pairs:
        mapping[v] = w
    return mapping, float(lines[-1][1]), lines[-1][3] == "1"
