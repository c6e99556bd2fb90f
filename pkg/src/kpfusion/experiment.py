"""Dataset directories and the six-way (face/palm/fused x K-NN/correlation) experiment.

A dataset directory holds one sub-directory per subject::

    <dir>/<subject_id>/face_ref.kpt
    <dir>/<subject_id>/palm_ref.kpt
    <dir>/<subject_id>/face_probe.kpt
    <dir>/<subject_id>/palm_probe.kpt
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import FormatError, KpFusionError
from .evaluation import RocReport, ComparisonReport, TrialSet, compare_modalities, default_grid, roc_from_scores, score_trials
from .keypoints import KeypointSet, SynthProfile, generate_synthetic_subject, load_keypoints, save_keypoints
from .matching import CORRELATION, KNN
from .pipeline import PipelineConfig, build_template_detailed, dump_config, unimodal_from_clustering

log = logging.getLogger(__name__)

CAPTURES = ("face_ref", "palm_ref", "face_probe", "palm_probe")
MODALITIES = ("face", "palm", "fused")


@dataclass(frozen=True)
class Subject:
    subject_id: str
    face_ref: KeypointSet
    palm_ref: KeypointSet
    face_probe: KeypointSet
    palm_probe: KeypointSet


def synthetic_subjects(n: int, seed: int = 0, profile: SynthProfile | None = None) -> list[Subject]:
    out = []
    for i in range(n):
        sid = f"s{i:03d}"
        quad = generate_synthetic_subject(seed * 100_003 + i, profile, subject_id=sid)
        out.append(Subject(sid, *quad))
    return out


def write_dataset(subjects: Iterable[Subject], out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for s in subjects:
        d = out_dir / s.subject_id
        d.mkdir(parents=True, exist_ok=True)
        for name in CAPTURES:
            path = d / f"{name}.kpt"
            save_keypoints(getattr(s, name), path)
            written.append(path)
    return written


def read_dataset(root: str | Path) -> list[Subject]:
    root = Path(root)
    if not root.is_dir():
        raise FormatError(f"{root} is not a directory")
    subjects = []
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        missing = [c for c in CAPTURES if not (d / f"{c}.kpt").is_file()]
        if missing:
            raise FormatError(f"subject directory {d} lacks {', '.join(m + '.kpt' for m in missing)}")
        subjects.append(Subject(d.name, *(load_keypoints(d / f"{c}.kpt") for c in CAPTURES)))
    return subjects


@dataclass
class ExperimentResult:
    reports: dict[tuple[str, str], RocReport]
    comparison: ComparisonReport
    scores: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]]


def enroll_all(subjects: Iterable[Subject], config: PipelineConfig):
    """Reference and probe templates for every modality; returns ``{modality: (refs, probes)}``."""
    templates = {m: ({}, {}) for m in MODALITIES}
    for s in subjects:
        for side, face, palm in ((0, s.face_ref, s.palm_ref), (1, s.face_probe, s.palm_probe)):
            build = build_template_detailed(face, palm, config)
            templates["fused"][side][s.subject_id] = build.template
            templates["face"][side][s.subject_id] = unimodal_from_clustering(face, build.face_clustering, config)
            templates["palm"][side][s.subject_id] = unimodal_from_clustering(palm, build.palm_clustering, config)
    return templates


def run_experiment(subjects: list[Subject], config: PipelineConfig | None = None,
                   metrics: Iterable[str] = (KNN, CORRELATION), grid_points: int = 200) -> ExperimentResult:
    config = config or PipelineConfig()
    if len(subjects) < 2:
        raise KpFusionError("at least two subjects are needed for impostor trials")
    templates = enroll_all(subjects, config)
    scores = {}
    for modality in MODALITIES:
        refs, probes = templates[modality]
        trials = TrialSet.one_to_one(refs, probes)
        for metric in metrics:
            scores[(modality, metric)] = score_trials(trials, metric, K=1)
    snapshot = config.to_mapping()
    reports = {}
    for metric in metrics:
        grid = default_grid(*[a for m in MODALITIES for a in scores[(m, metric)]], points=grid_points)
        for modality in MODALITIES:
            gen, imp = scores[(modality, metric)]
            reports[(modality, metric)] = roc_from_scores(gen, imp, metric, grid, f"{modality}_{metric}", snapshot)
    comparison = compare_modalities(
        *[[reports[(m, k)] for k in metrics] for m in MODALITIES])
    return ExperimentResult(reports, comparison, scores)
