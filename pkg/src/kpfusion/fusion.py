"""Sum-rule fusion of mapped descriptor pairs and concatenation into templates.

The ``.ftv`` template format is::

    FTV1 <subject_id> <k> <p>
    <128 reals>          # k * p lines

one descriptor block per line, reals written with ``repr``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, RaggedClusters
from .graphs import ClusterPairing
from .keypoints import DESCRIPTOR_LENGTH

MAGIC = "FTV1"


@dataclass(frozen=True, eq=False)
class FusedCluster:
    values: np.ndarray
    cluster_rank: int = 0

    @property
    def p(self) -> int:
        return self.values.size // DESCRIPTOR_LENGTH


@dataclass(frozen=True, eq=False)
class FusedTemplate:
    values: np.ndarray
    subject_id: str
    k: int
    p: int
    padded_count: int = 0

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size != self.k * self.p * DESCRIPTOR_LENGTH:
            raise FormatError(
                f"template has {values.size} values, expected k*p*128 = {self.k * self.p * DESCRIPTOR_LENGTH}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FusedTemplate):
            return NotImplemented
        return ((self.subject_id, self.k, self.p) == (other.subject_id, other.k, other.p)
                and np.array_equal(self.values, other.values))

    __hash__ = None  # type: ignore[assignment]


def sum_fuse(face_descriptors: np.ndarray, palm_descriptors: np.ndarray, mapping) -> np.ndarray:
    """Blocks ``face[j] + palm[mapping[j]]`` for ``j`` in face-vertex order, flattened."""
    f = np.asarray(mapping, dtype=np.int64)
    fused = np.asarray(face_descriptors, dtype=np.float64) + np.asarray(palm_descriptors, dtype=np.float64)[f]
    return fused.reshape(-1)


def fuse_cluster(pairing: ClusterPairing, cluster_rank: int = 0) -> FusedCluster:
    # padded sentinels carry zero descriptors, so they add nothing
    values = sum_fuse(pairing.face_graph.descriptors, pairing.palm_graph.descriptors, pairing.mapping.mapping)
    values.setflags(write=False)
    return FusedCluster(values, cluster_rank)


def concatenate(fused: Sequence[FusedCluster], subject_id: str = "unknown", padded_count: int = 0) -> FusedTemplate:
    if not fused:
        raise RaggedClusters("no clusters to concatenate")
    sizes = {fc.values.size for fc in fused}
    if len(sizes) != 1:
        raise RaggedClusters(f"fused clusters have differing lengths {sorted(sizes)}")
    ordered = sorted(fused, key=lambda fc: fc.cluster_rank)
    values = np.concatenate([fc.values for fc in ordered])
    return FusedTemplate(values, subject_id, len(fused), ordered[0].p, padded_count)


def save_template(template: FusedTemplate, path: str | Path) -> None:
    lines = [f"{MAGIC} {template.subject_id} {template.k} {template.p}"]
    for row in template.values.reshape(-1, DESCRIPTOR_LENGTH).tolist():
        lines.append(" ".join(repr(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_template(path: str | Path) -> FusedTemplate:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    head = lines[0].split() if lines else []
    if len(head) != 4 or head[0] != MAGIC:
        raise FormatError(f"bad header, expected '{MAGIC} <subject_id> <k> <p>'", line=1, path=str(path))
    try:
        k, p = int(head[2]), int(head[3])
    except ValueError:
        raise FormatError("k and p must be integers", line=1, path=str(path)) from None
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != k * p:
        raise FormatError(f"expected {k * p} descriptor lines, found {len(body)}", path=str(path))
    values = np.empty((k * p, DESCRIPTOR_LENGTH))
    for i, ln in enumerate(body):
        parts = ln.split()
        if len(parts) != DESCRIPTOR_LENGTH:
            raise FormatError(f"expected {DESCRIPTOR_LENGTH} values, got {len(parts)}", line=i + 2, path=str(path))
        try:
            values[i] = [float(v) for v in parts]
        except ValueError as exc:
            raise FormatError(str(exc), line=i + 2, path=str(path)) from None
    return FusedTemplate(values.reshape(-1), head[1], k, p)
