"""Keypoint data model, the ``.kpt`` text format and a seeded synthetic subject generator.

A ``.kpt`` file is UTF-8 text::

    KPT1 <modality> <subject_id> <capture_id> <count>
    x y scale orientation d0 d1 ... d127
    ...

with one record per keypoint.  Reals are written with ``repr`` so that a
load/save cycle reproduces every value bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, InvalidProfile

DESCRIPTOR_LENGTH = 128
RECORD_LENGTH = 4 + DESCRIPTOR_LENGTH
MAGIC = "KPT1"
TWO_PI = 2.0 * math.pi


class Modality(str, Enum):
    FACE = "Face"
    PALM = "Palm"

    @classmethod
    def parse(cls, value: str | "Modality") -> "Modality":
        if isinstance(value, Modality):
            return value
        for member in cls:
            if member.value.lower() == str(value).lower():
                return member
        raise FormatError(f"unknown modality {value!r}")


@dataclass(frozen=True, eq=False)
class Keypoint:
    x: float
    y: float
    scale: float
    orientation: float
    descriptor: np.ndarray

    def __post_init__(self) -> None:
        desc = np.array(self.descriptor, dtype=np.float64).reshape(-1)
        desc.setflags(write=False)
        object.__setattr__(self, "descriptor", desc)
        _check_record(self.x, self.y, self.scale, self.orientation, desc)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Keypoint):
            return NotImplemented
        return (
            (self.x, self.y, self.scale, self.orientation)
            == (other.x, other.y, other.scale, other.orientation)
            and np.array_equal(self.descriptor, other.descriptor)
        )


def _check_record(x, y, scale, orientation, desc) -> None:
    if desc.shape != (DESCRIPTOR_LENGTH,):
        raise FormatError(f"descriptor has {desc.size} entries, expected {DESCRIPTOR_LENGTH}")
    if not np.all(np.isfinite(desc)):
        raise FormatError("descriptor contains non-finite values")
    if np.any(desc < 0):
        raise FormatError("descriptor has a negative entry")
    if not (math.isfinite(x) and math.isfinite(y)) or x < 0 or y < 0:
        raise FormatError(f"location ({x}, {y}) must be finite and non-negative")
    if not math.isfinite(scale) or scale <= 0:
        raise FormatError(f"scale {scale} must be > 0")
    if not (0.0 <= orientation < TWO_PI):
        raise FormatError(f"orientation {orientation} outside [0, 2*pi)")


@dataclass(frozen=True, eq=False)
class KeypointSet:
    """All keypoints from one capture of one modality.

    Stored column-wise: ``xy`` is ``(n, 2)``, ``scale`` and ``orientation`` are
    ``(n,)`` and ``descriptors`` is ``(n, 128)``.  Arrays are read-only.
    """

    modality: Modality
    subject_id: str
    capture_id: str
    xy: np.ndarray
    scale: np.ndarray
    orientation: np.ndarray
    descriptors: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "modality", Modality.parse(self.modality))
        for name in ("subject_id", "capture_id"):
            value = str(getattr(self, name))
            if not value or any(c.isspace() for c in value):
                raise FormatError(f"{name} must be a non-empty token without whitespace")
            object.__setattr__(self, name, value)
        xy = np.array(self.xy, dtype=np.float64).reshape(-1, 2)
        n = xy.shape[0]
        scale = np.array(self.scale, dtype=np.float64).reshape(n)
        orientation = np.array(self.orientation, dtype=np.float64).reshape(n)
        desc = np.array(self.descriptors, dtype=np.float64)
        if desc.size == 0:
            desc = desc.reshape(0, DESCRIPTOR_LENGTH)
        if desc.ndim != 2 or desc.shape[0] != n:
            raise FormatError("descriptor block does not match the number of points")
        if desc.shape[1] != DESCRIPTOR_LENGTH:
            raise FormatError(f"descriptor has {desc.shape[1]} entries, expected {DESCRIPTOR_LENGTH}")
        for i in range(n):
            try:
                _check_record(xy[i, 0], xy[i, 1], scale[i], orientation[i], desc[i])
            except FormatError as exc:
                raise FormatError(f"point {i}: {exc}") from None
        for name, arr in (("xy", xy), ("scale", scale), ("orientation", orientation), ("descriptors", desc)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_points(cls, modality, subject_id: str, capture_id: str, points: Sequence[Keypoint]) -> "KeypointSet":
        n = len(points)
        return cls(
            modality=modality,
            subject_id=subject_id,
            capture_id=capture_id,
            xy=np.array([[p.x, p.y] for p in points], dtype=np.float64).reshape(n, 2),
            scale=np.array([p.scale for p in points], dtype=np.float64),
            orientation=np.array([p.orientation for p in points], dtype=np.float64),
            descriptors=np.array([p.descriptor for p in points], dtype=np.float64).reshape(n, DESCRIPTOR_LENGTH),
        )

    def __len__(self) -> int:
        return self.xy.shape[0]

    @property
    def points(self) -> list[Keypoint]:
        return [
            Keypoint(float(self.xy[i, 0]), float(self.xy[i, 1]), float(self.scale[i]),
                     float(self.orientation[i]), self.descriptors[i])
            for i in range(len(self))
        ]

    def subset(self, indices: Iterable[int]) -> "KeypointSet":
        idx = np.asarray(list(indices), dtype=np.intp)
        return KeypointSet(self.modality, self.subject_id, self.capture_id,
                           self.xy[idx], self.scale[idx], self.orientation[idx], self.descriptors[idx])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KeypointSet):
            return NotImplemented
        return (
            self.modality == other.modality
            and self.subject_id == other.subject_id
            and self.capture_id == other.capture_id
            and np.array_equal(self.xy, other.xy)
            and np.array_equal(self.scale, other.scale)
            and np.array_equal(self.orientation, other.orientation)
            and np.array_equal(self.descriptors, other.descriptors)
        )

    __hash__ = None  # type: ignore[assignment]


# ---------------------------------------------------------------------------
# .kpt files


def save_keypoints(kset: KeypointSet, path: str | Path) -> None:
    if len(kset) == 0:
        raise FormatError("refusing to write a keypoint set with no points")
    header = f"{MAGIC} {kset.modality.value} {kset.subject_id} {kset.capture_id} {len(kset)}"
    lines = [header]
    block = np.column_stack([kset.xy, kset.scale, kset.orientation, kset.descriptors])
    for row in block.tolist():
        lines.append(" ".join(repr(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_keypoints(path: str | Path) -> KeypointSet:
    """Read and validate a ``.kpt`` file.

    Raises ``OSError`` when the file cannot be read and :class:`FormatError`
    (carrying the offending line number) when its content is malformed.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty file", line=1, path=str(path))
    head = lines[0].split()
    if len(head) != 5 or head[0] != MAGIC:
        raise FormatError(f"bad header, expected '{MAGIC} <modality> <subject> <capture> <count>'",
                          line=1, path=str(path))
    try:
        modality = Modality.parse(head[1])
        count = int(head[4])
    except (FormatError, ValueError) as exc:
        raise FormatError(str(exc), line=1, path=str(path)) from None
    if count < 1:
        raise FormatError("point count must be >= 1", line=1, path=str(path))
    records = [ln for ln in lines[1:]]
    while records and not records[-1].strip():
        records.pop()
    if len(records) != count:
        raise FormatError(f"header announces {count} records, found {len(records)}",
                          line=min(len(lines), count + 2), path=str(path))
    rows = np.empty((count, RECORD_LENGTH), dtype=np.float64)
    for i, ln in enumerate(records):
        lineno = i + 2
        parts = ln.split()
        if len(parts) != RECORD_LENGTH:
            raise FormatError(
                f"expected {RECORD_LENGTH} fields (x y scale orientation + {DESCRIPTOR_LENGTH} descriptor), "
                f"got {len(parts)}", line=lineno, path=str(path))
        try:
            values = [float(p) for p in parts]
        except ValueError as exc:
            raise FormatError(str(exc), line=lineno, path=str(path)) from None
        try:
            _check_record(values[0], values[1], values[2], values[3], np.asarray(values[4:]))
        except FormatError as exc:
            raise FormatError(str(exc), line=lineno, path=str(path)) from None
        rows[i] = values
    return KeypointSet(modality, head[2], head[3], rows[:, 0:2], rows[:, 2], rows[:, 3], rows[:, 4:])


# ---------------------------------------------------------------------------
# synthetic subjects


@dataclass(frozen=True)
class SynthProfile:
    """Knobs of the synthetic subject generator.

    Each modality of a subject has ``n_regions`` spatial regions laid out
    left to right across a ``width`` x ``height`` rectangle.  Keypoints of a
    region share a descriptor family; every keypoint descriptor is a noisy
    copy of one vector from a per-subject basis, and face and palm draw from
    the same basis.  Each basis vector also owns an offset from its region
    centre, and both modalities share region centres, so twin keypoints sit
    at the same position up to ``layout_jitter``.  Probes perturb the reference with descriptor noise,
    spatial jitter, a per-capture gain and random point drops.
    """

    n_face: int = 120
    n_palm: int = 80
    width: float = 256.0
    height: float = 256.0
    n_regions: int = 4
    region_spread: float = 14.0
    layout_jitter: float = 2.0
    family_spread: float = 0.06
    point_spread: float = 0.02
    desc_noise: float = 0.03
    quality_spread: float = 0.0
    spatial_jitter: float = 1.0
    gain_jitter: float = 0.1
    drop_rate: float = 0.05

    def __post_init__(self) -> None:
        if self.n_face < 1 or self.n_palm < 1 or self.n_regions < 1:
            raise InvalidProfile("point and region counts must be positive")
        if self.n_face < self.n_palm:
            raise InvalidProfile("face count must be >= palm count")
        if self.width <= 0 or self.height <= 0:
            raise InvalidProfile("spatial extent must be positive")
        for name in ("region_spread", "layout_jitter", "family_spread", "point_spread", "desc_noise",
                     "quality_spread", "spatial_jitter", "gain_jitter"):
            if getattr(self, name) < 0:
                raise InvalidProfile(f"{name} must be >= 0")
        if not (0.0 <= self.drop_rate < 1.0):
            raise InvalidProfile("drop_rate must lie in [0, 1)")

    @classmethod
    def from_mapping(cls, values: dict) -> "SynthProfile":
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise InvalidProfile(f"unknown profile key {key!r}")
            kwargs[key] = int(raw) if key.startswith("n_") else float(raw)
        return cls(**kwargs)


PROFILES: dict[str, SynthProfile] = {
    "default": SynthProfile(),
    "clean": SynthProfile(desc_noise=0.0, spatial_jitter=0.0, gain_jitter=0.0, drop_rate=0.0),
    "hard": SynthProfile(desc_noise=0.06, spatial_jitter=2.0, gain_jitter=0.2, drop_rate=0.15),
}


def _unit_rows(a: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(a, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return a / norms


def _modality_reference(rng: np.random.Generator, modality: Modality, subject_id: str,
                        n: int, basis: np.ndarray, centers: np.ndarray, layout: np.ndarray,
                        profile: SynthProfile) -> KeypointSet:
    r = profile.n_regions
    which = np.arange(n) % basis.shape[0]
    region = which % r
    offsets = profile.region_spread * rng.standard_normal((n, 2))
    twins = np.arange(n) < basis.shape[0]
    offsets[twins] = layout[which[twins]]
    xy = centers[region] + offsets + profile.layout_jitter * rng.standard_normal((n, 2))
    xy[:, 0] = np.clip(xy[:, 0], 0.0, profile.width)
    xy[:, 1] = np.clip(xy[:, 1], 0.0, profile.height)
    desc = np.maximum(basis[which] + profile.point_spread * rng.standard_normal((n, DESCRIPTOR_LENGTH)), 0.0)
    scale = rng.uniform(1.0, 8.0, size=n)
    orientation = rng.uniform(0.0, TWO_PI, size=n)
    return KeypointSet(modality, subject_id, "ref", xy, scale, orientation, desc)


def _perturb(rng: np.random.Generator, ref: KeypointSet, profile: SynthProfile) -> KeypointSet:
    n = len(ref)
    xy = ref.xy + profile.spatial_jitter * rng.standard_normal((n, 2))
    xy[:, 0] = np.clip(xy[:, 0], 0.0, profile.width)
    xy[:, 1] = np.clip(xy[:, 1], 0.0, profile.height)
    gain = max(1.0 + profile.gain_jitter * rng.standard_normal(), 0.05)
    sigma = profile.desc_noise * math.exp(profile.quality_spread * rng.standard_normal())
    desc = np.maximum(gain * ref.descriptors + sigma * rng.standard_normal(ref.descriptors.shape), 0.0)
    keep = rng.random(n) >= profile.drop_rate
    if not keep.any():
        keep[rng.integers(n)] = True
    return KeypointSet(ref.modality, ref.subject_id, "probe", xy[keep], ref.scale[keep],
                       ref.orientation[keep], desc[keep])


def generate_synthetic_subject(seed: int, profile: SynthProfile | None = None,
                               subject_id: str | None = None):
    """Return ``(face_ref, palm_ref, face_probe, palm_probe)`` for one synthetic subject.

    The output is a pure function of ``(seed, profile, subject_id)``.
    """
    profile = profile or SynthProfile()
    if not isinstance(profile, SynthProfile):
        raise InvalidProfile("profile must be a SynthProfile")
    subject_id = subject_id or f"s{seed}"
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0x6B70]))
    protos = _unit_rows(rng.gamma(0.5, size=(profile.n_regions, DESCRIPTOR_LENGTH)))
    n_basis = profile.n_palm
    family = np.arange(n_basis) % profile.n_regions
    basis = np.maximum(protos[family] + profile.family_spread * rng.standard_normal((n_basis, DESCRIPTOR_LENGTH)), 0.0)
    r = profile.n_regions
    centers = np.column_stack([
        (np.arange(r) + rng.uniform(0.3, 0.7, size=r)) * (profile.width / r),
        rng.uniform(0.25, 0.75, size=r) * profile.height,
    ])
    layout = profile.region_spread * rng.standard_normal((n_basis, 2))
    face_ref = _modality_reference(rng, Modality.FACE, subject_id, profile.n_face, basis, centers, layout, profile)
    palm_ref = _modality_reference(rng, Modality.PALM, subject_id, profile.n_palm, basis, centers, layout, profile)
    face_probe = _perturb(rng, face_ref, profile)
    palm_probe = _perturb(rng, palm_ref, profile)
    return face_ref, palm_ref, face_probe, palm_probe
