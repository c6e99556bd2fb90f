"""End-to-end template construction and the flat ``key=value`` configuration file.

``build_template`` runs, per modality, PAM clustering, silhouette scoring and
refinement; then for every (face cluster, palm cluster) candidate it matches
keypoints, equalizes to ``p`` pairs and maps the two cluster graphs; the
cheapest one-to-one cluster pairing is fused by the sum rule and the fused
clusters are concatenated in order of their face medoid position.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from .clustering import ClusterConfig, Clustering, distance_matrix, pam_cluster, refine_clusters, score_clustering
from .correspondence import ClusterView
from .errors import InvalidConfig, KpFusionError, StageError, TooFewPoints
from .fusion import FusedCluster, FusedTemplate, concatenate, fuse_cluster
from .graphs import ClusterPairing, RelaxationConfig, assign_cluster_pairs
from .keypoints import DESCRIPTOR_LENGTH, KeypointSet
from .matching import CORRELATION, METRICS

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    p: int = 8
    relaxation: RelaxationConfig = field(default_factory=RelaxationConfig)
    ratio_threshold: float = 0.8
    pad_penalty: float = 100.0
    metric: str = CORRELATION
    knn_k: int = 1
    threshold: float | None = None

    def __post_init__(self) -> None:
        if int(self.p) < 3:
            raise InvalidConfig("p must be >= 3")
        if not self.ratio_threshold > 0:
            raise InvalidConfig("ratio_threshold must be > 0")
        if self.pad_penalty < 0:
            raise InvalidConfig("pad_penalty must be >= 0")
        if self.metric not in METRICS:
            raise InvalidConfig(f"metric must be one of {METRICS}")
        if int(self.knn_k) < 1:
            raise InvalidConfig("knn_k must be >= 1")

    @property
    def k(self) -> int:
        return self.cluster.k

    @property
    def template_length(self) -> int:
        return self.k * self.p * DESCRIPTOR_LENGTH

    def default_threshold(self) -> float:
        if self.threshold is not None:
            return float(self.threshold)
        return 0.9 if self.metric == CORRELATION else 1.0

    # flat key=value view -------------------------------------------------

    def to_mapping(self) -> dict[str, Any]:
        flat: dict[str, Any] = {}
        for name, value in asdict(self.cluster).items():
            flat[_CLUSTER_KEYS_INV.get(name, name)] = value
        for name, value in asdict(self.relaxation).items():
            flat[_RELAX_KEYS_INV.get(name, name)] = value
        for f in fields(self):
            if f.name not in ("cluster", "relaxation"):
                flat[f.name] = getattr(self, f.name)
        return flat

    @classmethod
    def from_mapping(cls, values: dict[str, Any], base: "PipelineConfig | None" = None) -> "PipelineConfig":
        base = base or cls()
        cluster_kw, relax_kw, top_kw = {}, {}, {}
        types = {**{_CLUSTER_KEYS_INV.get(f.name, f.name): (cluster_kw, f.name, type(getattr(base.cluster, f.name)))
                    for f in fields(ClusterConfig)},
                 **{_RELAX_KEYS_INV.get(f.name, f.name): (relax_kw, f.name, type(getattr(base.relaxation, f.name)))
                    for f in fields(RelaxationConfig)}}
        for f in fields(cls):
            if f.name not in ("cluster", "relaxation"):
                default = getattr(base, f.name)
                types[f.name] = (top_kw, f.name, float if f.name == "threshold" else type(default))
        for key, raw in values.items():
            if key not in types:
                raise InvalidConfig(f"unknown configuration key {key!r}")
            target, name, kind = types[key]
            try:
                target[name] = _coerce(raw, kind)
            except ValueError:
                raise InvalidConfig(f"bad value for {key}: {raw!r}") from None
        return replace(base, cluster=replace(base.cluster, **cluster_kw),
                       relaxation=replace(base.relaxation, **relax_kw), **top_kw)


_CLUSTER_KEYS_INV = {"metric": "cluster_metric", "seed": "seed", "max_iterations": "max_iterations"}
_RELAX_KEYS_INV = {"seed": "relax_seed", "max_iters": "relax_max_iters", "epsilon": "relax_epsilon"}


def _coerce(raw, kind):
    if isinstance(raw, str):
        raw = raw.strip()
        if kind is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        if raw.lower() in ("none", ""):
            return None
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw if kind is str else kind(raw)


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    values: dict[str, Any] = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig.from_mapping(values)


def dump_config(config: PipelineConfig) -> str:
    return "".join(f"{k}={v}\n" for k, v in config.to_mapping().items())


# ---------------------------------------------------------------------------
# stages


def _staged(stage: str, fn, *args, cluster: int | None = None, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (KpFusionError, ValueError) as exc:
        raise StageError(stage, exc, cluster) from exc


def cluster_modality(kset: KeypointSet, config: PipelineConfig, label: str = "") -> Clustering:
    stage = f"clustering[{label or kset.modality.value.lower()}]"
    need = 3 * config.k
    if len(kset) < need:
        raise StageError(stage, TooFewPoints(f"{len(kset)} points, need at least 3*k = {need}"))
    clustering = _staged(stage, pam_cluster, kset, config.cluster)
    clustering = _staged(stage.replace("clustering", "silhouette"), score_clustering, kset, clustering, config.cluster)
    return _staged(stage.replace("clustering", "refinement"), refine_clusters, kset, clustering, config.cluster)


def cluster_views(kset: KeypointSet, clustering: Clustering) -> list[ClusterView]:
    return [ClusterView.from_set(kset, clustering.members(c, retained_only=True), c) for c in range(clustering.k)]


def cluster_ranks(kset: KeypointSet, clustering: Clustering) -> list[int]:
    """Rank of each cluster when ordered by medoid ``x`` then ``y``."""
    med = np.asarray(clustering.medoid_indices)
    order = np.lexsort((med, kset.xy[med, 1], kset.xy[med, 0]))
    ranks = np.empty(clustering.k, dtype=np.int64)
    ranks[order] = np.arange(clustering.k)
    return [int(r) for r in ranks]


@dataclass(frozen=True, eq=False)
class TemplateBuild:
    template: FusedTemplate
    face_clustering: Clustering
    palm_clustering: Clustering
    pairings: list[ClusterPairing]
    ranks: list[int]

    @property
    def padded_count(self) -> int:
        return sum(p.padded_count for p in self.pairings)


def build_template_detailed(face: KeypointSet, palm: KeypointSet,
                            config: PipelineConfig | None = None) -> TemplateBuild:
    config = config or PipelineConfig()
    face_cl = cluster_modality(face, config, "face")
    palm_cl = cluster_modality(palm, config, "palm")
    pairings = _staged("graph-mapping", assign_cluster_pairs,
                       cluster_views(face, face_cl), cluster_views(palm, palm_cl),
                       config.relaxation, config.p, config.ratio_threshold, config.pad_penalty)
    ranks = cluster_ranks(face, face_cl)
    fused = [_staged("fusion", fuse_cluster, pr, ranks[pr.face_cluster_id], cluster=pr.face_cluster_id)
             for pr in pairings]
    padded = sum(pr.padded_count for pr in pairings)
    template = _staged("concatenation", concatenate, fused, face.subject_id, padded)
    return TemplateBuild(template, face_cl, palm_cl, pairings, ranks)


def build_template(face: KeypointSet, palm: KeypointSet, config: PipelineConfig | None = None) -> FusedTemplate:
    return build_template_detailed(face, palm, config).template


def unimodal_from_clustering(kset: KeypointSet, clustering: Clustering, config: PipelineConfig) -> FusedTemplate:
    dist = distance_matrix(kset, config.cluster)
    ranks = cluster_ranks(kset, clustering)
    blocks = []
    padded = 0
    for c in range(clustering.k):
        members = clustering.members(c, retained_only=True)
        med = clustering.medoid_indices[c]
        order = members[np.argsort(dist[members, med], kind="stable")][: config.p]
        block = np.zeros((config.p, DESCRIPTOR_LENGTH))
        block[: order.size] = kset.descriptors[order]
        padded += config.p - order.size
        blocks.append(FusedCluster(block.reshape(-1), ranks[c]))
    return concatenate(blocks, kset.subject_id, padded)


def build_unimodal_template(kset: KeypointSet, config: PipelineConfig | None = None) -> FusedTemplate:
    """Single-modality template: top-``p`` retained points per cluster by medoid distance."""
    config = config or PipelineConfig()
    clustering = cluster_modality(kset, config)
    return unimodal_from_clustering(kset, clustering, config)
