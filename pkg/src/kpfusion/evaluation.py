"""Genuine/impostor verification trials, threshold sweeps and ROC summaries.

Scores follow the metric's own direction: Euclidean distances accept at or
below the threshold, correlations at or above it.  FAR and FRR are
percentages of impostor and genuine trials; the recognition rate reported
alongside is ``100 - FRR``.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyTrials, InvalidConfig, MismatchedGrids
from .fusion import FusedTemplate
from .matching import CORRELATION, KNN, METRICS, verify

DEFAULT_GRID_POINTS = 200


@dataclass
class TrialSet:
    """Probes paired with the identity they claim.

    ``gallery`` maps subject ids to their enrolled templates.
    """

    genuine: list[tuple[FusedTemplate, str]]
    impostor: list[tuple[FusedTemplate, str]]
    gallery: dict[str, list[FusedTemplate]]

    def __post_init__(self) -> None:
        for probe, claim in self.genuine + self.impostor:
            if claim not in self.gallery:
                raise InvalidConfig(f"claimed subject {claim!r} is not enrolled")
        for probe, claim in self.impostor:
            if probe.subject_id == claim:
                raise InvalidConfig(f"impostor trial claims its own identity {claim!r}")

    @classmethod
    def one_to_one(cls, references: Mapping[str, FusedTemplate], probes: Mapping[str, FusedTemplate]) -> "TrialSet":
        """Every probe claims its own identity once and every other enrolled identity once."""
        ids = sorted(references)
        gallery = {sid: [references[sid]] for sid in ids}
        genuine = [(probes[sid], sid) for sid in ids if sid in probes]
        impostor = [(probes[p], c) for p in ids if p in probes for c in ids if c != p]
        return cls(genuine, impostor, gallery)


def _trial_score(args) -> float:
    trials, metric, K, probe, claim = args
    entries = trials.gallery[claim]
    return verify(metric, probe, entries, min(K, len(entries)), 0.0).score


def score_trials(trials: TrialSet, metric: str, K: int = 1, workers: int = 1):
    """Return ``(genuine_scores, impostor_scores)`` as float arrays.

    Each probe is compared one-to-one against the claimed identity's enrolled
    templates.  With ``workers > 1`` scores are computed in a thread pool and
    gathered in submission order.
    """
    if metric not in METRICS:
        raise InvalidConfig(f"unknown metric {metric!r}")
    jobs_g = [(trials, metric, K, p, c) for p, c in trials.genuine]
    jobs_i = [(trials, metric, K, p, c) for p, c in trials.impostor]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            gen = list(pool.map(_trial_score, jobs_g))
            imp = list(pool.map(_trial_score, jobs_i))
    else:
        gen = [_trial_score(j) for j in jobs_g]
        imp = [_trial_score(j) for j in jobs_i]
    return np.asarray(gen, dtype=np.float64), np.asarray(imp, dtype=np.float64)


def default_grid(*score_arrays, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Evenly spaced thresholds spanning all finite observed scores, endpoints included."""
    allv = np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in score_arrays])
    allv = allv[np.isfinite(allv)]
    if allv.size == 0:
        return np.zeros(1)
    lo, hi = float(allv.min()), float(allv.max())
    if lo == hi:
        return np.array([lo])
    return np.linspace(lo, hi, points)


def accepts(metric: str, scores: np.ndarray, threshold: float) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        if metric == KNN:
            return scores <= threshold
        return scores >= threshold


@dataclass
class RocReport:
    metric: str
    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    eer: float
    auc: float
    n_genuine: int
    n_impostor: int
    label: str = ""
    config: dict = field(default_factory=dict)

    @property
    def recognition_rate(self) -> np.ndarray:
        return 100.0 - self.frr

    def rows(self):
        for t, a, r, g in zip(self.thresholds, self.far, self.frr, self.recognition_rate):
            yield float(t), float(a), float(r), float(g)

    def to_text(self) -> str:
        lines = ["threshold far frr recognition_rate"]
        lines += [f"{t!r} {a!r} {r!r} {g!r}" for t, a, r, g in self.rows()]
        lines.append(f"eer {self.eer!r} auc {self.auc!r}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path, with_json: bool = True) -> None:
        path = Path(path)
        path.write_text(self.to_text(), encoding="utf-8")
        if with_json:
            path.with_suffix(".json").write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "metric": self.metric,
            "rows": [dict(zip(("threshold", "far", "frr", "recognition_rate"), r)) for r in self.rows()],
            "eer": self.eer,
            "auc": self.auc,
            "n_genuine": self.n_genuine,
            "n_impostor": self.n_impostor,
            "config": self.config,
        }


def equal_error_rate(far: np.ndarray, frr: np.ndarray) -> float:
    """Crossing of the FAR and FRR curves, linearly interpolated between grid points."""
    diff = np.asarray(far, dtype=np.float64) - np.asarray(frr, dtype=np.float64)
    exact = np.flatnonzero(diff == 0)
    if exact.size:
        i = int(exact[0])
        return float(far[i])
    sign_change = np.flatnonzero(np.sign(diff[:-1]) != np.sign(diff[1:]))
    if sign_change.size == 0:
        i = int(np.argmin(np.abs(diff)))
        return float((far[i] + frr[i]) / 2.0)
    i = int(sign_change[0])
    w = diff[i] / (diff[i] - diff[i + 1])
    return float(far[i] + w * (far[i + 1] - far[i]))


def area_under_roc(far: np.ndarray, frr: np.ndarray) -> float:
    """Trapezoid area under (FAR, 1 - FRR), anchored at (0, 0) and (1, 1)."""
    x = np.concatenate([[0.0], np.asarray(far) / 100.0, [1.0]])
    y = np.concatenate([[0.0], 1.0 - np.asarray(frr) / 100.0, [1.0]])
    order = np.lexsort((y, x))
    x, y = x[order], y[order]
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def _auc_from_counts(false_accepts: np.ndarray, true_accepts: np.ndarray, n_imp: int, n_gen: int) -> float:
    # integer trapezoid numerator: the only rounding is the final division
    x = np.concatenate([[0], false_accepts, [n_imp]]).astype(np.int64)
    y = np.concatenate([[0], true_accepts, [n_gen]]).astype(np.int64)
    order = np.lexsort((y, x))
    x, y = x[order], y[order]
    twice_area = int(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1])))
    return twice_area / (2 * n_imp * n_gen)


def roc_from_scores(genuine: np.ndarray, impostor: np.ndarray, metric: str,
                    thresholds: Sequence[float] | None = None, label: str = "",
                    config: dict | None = None) -> RocReport:
    genuine = np.asarray(genuine, dtype=np.float64)
    impostor = np.asarray(impostor, dtype=np.float64)
    if genuine.size == 0 or impostor.size == 0:
        raise EmptyTrials("need at least one genuine and one impostor trial")
    if thresholds is None:
        thresholds = default_grid(genuine, impostor)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.size > 1 and np.any(np.diff(thresholds) < 0):
        raise InvalidConfig("thresholds must be sorted ascending")
    fa = np.array([np.count_nonzero(accepts(metric, impostor, t)) for t in thresholds], dtype=np.int64)
    ta = np.array([np.count_nonzero(accepts(metric, genuine, t)) for t in thresholds], dtype=np.int64)
    far = 100.0 * fa / impostor.size
    frr = 100.0 * (genuine.size - ta) / genuine.size
    auc = _auc_from_counts(fa, ta, impostor.size, genuine.size)
    return RocReport(metric, thresholds, far, frr, equal_error_rate(far, frr), auc,
                     int(genuine.size), int(impostor.size), label, dict(config or {}))


def run_trials(trials: TrialSet, metric: str = CORRELATION, K: int = 1,
               thresholds: Sequence[float] | None = None, workers: int = 1,
               label: str = "", config: dict | None = None) -> RocReport:
    if not trials.genuine or not trials.impostor:
        raise EmptyTrials("need at least one genuine and one impostor trial")
    gen, imp = score_trials(trials, metric, K, workers)
    return roc_from_scores(gen, imp, metric, thresholds, label, config)


# ---------------------------------------------------------------------------
# six-way comparison


@dataclass
class ComparisonReport:
    rows: list[tuple[str, str, float, float]]
    improvements: dict[tuple[str, str], bool]

    def auc(self, modality: str, metric: str) -> float:
        return next(r[2] for r in self.rows if r[0] == modality and r[1] == metric)

    def eer(self, modality: str, metric: str) -> float:
        return next(r[3] for r in self.rows if r[0] == modality and r[1] == metric)

    def to_text(self) -> str:
        lines = ["modality metric auc eer"]
        lines += [f"{m} {k} {a!r} {e!r}" for m, k, a, e in self.rows]
        for (uni, metric), better in sorted(self.improvements.items()):
            lines.append(f"fused_vs_{uni}_{metric} {'improvement' if better else 'no improvement'}")
        return "\n".join(lines) + "\n"


def _as_reports(x) -> list[RocReport]:
    if isinstance(x, RocReport):
        return [x]
    if isinstance(x, Mapping):
        return list(x.values())
    return list(x)


def compare_modalities(face_only, palm_only, fused) -> ComparisonReport:
    """Tabulate AUC/EER per (modality, metric) and flag where fusion beats a unimodal AUC.

    Each argument is a :class:`RocReport` or a collection of them (one per
    metric).  Reports of one metric must share their threshold grid and
    trial counts.
    """
    groups = {"face": _as_reports(face_only), "palm": _as_reports(palm_only), "fused": _as_reports(fused)}
    by_metric: dict[str, dict[str, RocReport]] = {}
    for modality, reports in groups.items():
        for r in reports:
            by_metric.setdefault(r.metric, {})[modality] = r
    rows, improvements = [], {}
    for modality in ("face", "palm", "fused"):
        for r in groups[modality]:
            rows.append((modality, r.metric, r.auc, r.eer))
    for metric, reps in by_metric.items():
        grids = [r.thresholds for r in reps.values()]
        if any(g.shape != grids[0].shape or not np.array_equal(g, grids[0]) for g in grids):
            raise MismatchedGrids(f"{metric} reports use different threshold grids")
        counts = {(r.n_genuine, r.n_impostor) for r in reps.values()}
        if len(counts) != 1:
            raise MismatchedGrids(f"{metric} reports come from different trial sets")
        if "fused" in reps:
            for uni in ("face", "palm"):
                if uni in reps:
                    improvements[(uni, metric)] = reps["fused"].auc > reps[uni].auc
    return ComparisonReport(rows, improvements)


def ordering_holds(cmp: ComparisonReport) -> dict[str, bool]:
    """Checks of the expected ranking: fused correlation >= fused K-NN >= every unimodal AUC,
    and fused correlation has the lowest EER."""
    fc, fk = cmp.auc("fused", CORRELATION), cmp.auc("fused", KNN)
    uni = [cmp.auc(m, k) for m in ("face", "palm") for k in (KNN, CORRELATION)]
    eers = [r[3] for r in cmp.rows]
    return {
        "fused_corr_auc_ge_fused_knn": fc >= fk,
        "fused_knn_auc_ge_unimodal": all(fk >= u for u in uni),
        "fused_corr_eer_min": cmp.eer("fused", CORRELATION) <= min(eers),
    }
