"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

The lines are printed as the tests run and repeated in the pytest terminal
summary.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

import conftest
from conftest import planted_instance
from oracles import (best_assignment, best_permutation, exhaustive_medoid_cost, pairwise, silhouette_oracle)
from kpfusion.cli import main
from kpfusion.clustering import pam_from_distances, silhouettes_from_distances
from kpfusion.evaluation import ordering_holds
from kpfusion.experiment import run_experiment, synthetic_subjects
from kpfusion.graphs import best_mapping, build_graph, solve_assignment
from kpfusion.keypoints import DESCRIPTOR_LENGTH, PROFILES, generate_synthetic_subject, save_keypoints
from kpfusion.matching import correlation_verify, euclidean_distance, knn_verify, normalized_correlation
from kpfusion.pipeline import PipelineConfig, build_template


def report(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    conftest.ACCEPTANCE.append(line)
    print(line)
    assert ok, line


def test_qualitative_ordering():
    start = time.perf_counter()
    passes, failures = 0, []
    for seed in range(10):
        result = run_experiment(synthetic_subjects(50, seed))
        checks = ordering_holds(result.comparison)
        if all(checks.values()):
            passes += 1
        else:
            failures.append(f"seed {seed}: {', '.join(k for k, v in checks.items() if not v)}")
    elapsed = time.perf_counter() - start
    detail = f"{passes}/10 seeds hold the ordering in {elapsed:.1f}s"
    if failures:
        detail += f" ({'; '.join(failures)})"
    report("qualitative ordering", passes >= 9 and elapsed < 60, detail)


def _blobs(rng, k, per, spread):
    centres = rng.uniform(0, 10 * k, size=(k, 2))
    pts = np.vstack([c + spread * rng.standard_normal((per, 2)) for c in centres])
    return pts, np.repeat(np.arange(k), per)


def _separation(dist, truth):
    same = truth[:, None] == truth[None, :]
    np.fill_diagonal(same, False)
    intra = dist[same].max() if same.any() else 0.0
    return np.inf if intra == 0 else dist[truth[:, None] != truth[None, :]].min() / intra


def test_pam_oracle():
    rng = np.random.default_rng(20240)
    start = time.perf_counter()
    separated = exact = below = 0
    for _ in range(200):
        k = int(rng.integers(1, 4))
        per = int(rng.integers(3, 12 // k + 1))
        pts, truth = _blobs(rng, k, per, float(rng.choice([0.5, 3.0, 8.0])))
        dist = np.asarray(pairwise(pts))
        _, _, cost, _, _ = pam_from_distances(dist, k, seed=int(rng.integers(1000)))
        best = exhaustive_medoid_cost(dist.tolist(), k)
        below += cost < best * (1 - 1e-12)
        if k > 1 and _separation(dist, truth) >= 3:
            separated += 1
            exact += abs(cost - best) <= 1e-12 * max(best, 1.0)
    elapsed = time.perf_counter() - start
    report("PAM oracle", exact == separated and below == 0 and separated > 0 and elapsed < 10,
           f"{exact}/{separated} separated instances exact, {below} below the exhaustive minimum, "
           f"{elapsed:.1f}s")


def test_silhouette_bound_and_oracle():
    rng = np.random.default_rng(77)
    worst, out_of_bounds = 0.0, 0
    for _ in range(1000):
        n = int(rng.integers(4, 16))
        k = int(rng.integers(1, min(4, n) + 1))
        dist = np.asarray(pairwise(rng.uniform(0, 10, size=(n, 3))))
        medoids, labels, *_ = pam_from_distances(dist, k, seed=int(rng.integers(1000)))
        ours, _ = silhouettes_from_distances(dist, labels, medoids)
        out_of_bounds += int(np.count_nonzero((ours < -1) | (ours > 1)))
        expected = np.array(silhouette_oracle(dist.tolist(), labels.tolist(), medoids.tolist()))
        worst = max(worst, float(np.max(np.abs(ours - expected))))
    report("silhouette bound and oracle", out_of_bounds == 0 and worst <= 1e-12,
           f"1000 instances, {out_of_bounds} out of [-1, 1], max deviation {worst:.2e}")


def test_graph_mapping_oracle():
    rng = np.random.default_rng(4242)
    below = near = 0
    for _ in range(200):
        n = int(rng.integers(3, 7))
        inst = planted_instance(rng, n, jitter=float(rng.uniform(0.5, 4.0)), desc_noise=0.03)
        fx, fd, px, pd, _ = inst
        m = best_mapping(build_graph(fx, fd), build_graph(px, pd))
        best, _ = best_permutation(fx, px, fd, pd, 0.5)
        below += m.distortion_cost < best - 1e-9
        near += m.distortion_cost <= 1.05 * best + 1e-12
    planted = 0
    for _ in range(100):
        n = int(rng.integers(3, 7))
        fx, fd, px, pd, perm = planted_instance(rng, n)
        m = best_mapping(build_graph(fx, fd), build_graph(px, pd))
        planted += bool(np.array_equal(m.mapping, perm) and m.distortion_cost == 0.0)
    report("graph-mapping oracle", below == 0 and near >= 180 and planted == 100,
           f"{below} below minimum, {near}/200 within 1.05x, {planted}/100 planted exact at zero cost")


def test_cluster_assignment_exactness():
    rng = np.random.default_rng(606)
    exact = 0
    for _ in range(100):
        k = int(rng.integers(1, 7))
        cost = rng.uniform(0, 100, size=(k, k))
        choice = solve_assignment(cost)
        total = float(cost[np.arange(k), choice].sum())
        exact += sorted(choice.tolist()) == list(range(k)) and total == pytest.approx(
            best_assignment(cost.tolist()), rel=1e-12)
    report("cluster-assignment exactness", exact == 100, f"{exact}/100 matrices at the k! minimum")


def test_metric_properties():
    rng = np.random.default_rng(99)
    self_dev = bound = scale = 0.0
    for _ in range(1000):
        a, b = rng.gamma(0.5, size=(2, DESCRIPTOR_LENGTH))
        c = float(rng.uniform(1e-3, 1e3))
        self_dev = max(self_dev, abs(normalized_correlation(a, a) - 1.0))
        r = normalized_correlation(a, b)
        bound = max(bound, r, normalized_correlation(a, a))
        scale = max(scale, abs(normalized_correlation(c * a, b) - r))
    violations = 0
    triples = rng.standard_normal((10_000, 3, DESCRIPTOR_LENGTH)) * rng.uniform(0.01, 100, size=(10_000, 1, 1))
    for x, y, z in triples:
        violations += euclidean_distance(x, z) > euclidean_distance(x, y) + euclidean_distance(y, z)
    ok = self_dev <= 1e-12 and bound <= 1 + 1e-12 and scale <= 1e-12 and violations == 0
    report("metric properties", ok,
           f"self-score deviation {self_dev:.1e}, max score {bound!r}, scale deviation {scale:.1e}, "
           f"{violations} triangle violations in 10^4 triples")


def test_end_to_end_determinism(tmp_path):
    face, palm, _, _ = generate_synthetic_subject(21)
    save_keypoints(face, tmp_path / "face.kpt")
    save_keypoints(palm, tmp_path / "palm.kpt")
    for store in ("a", "b"):
        assert main(["enroll", str(tmp_path / "face.kpt"), str(tmp_path / "palm.kpt"),
                     "--store-dir", str(tmp_path / store)]) == 0
    same_file = (tmp_path / "a" / "s21.ftv").read_bytes() == (tmp_path / "b" / "s21.ftv").read_bytes()
    face_ref, palm_ref, face_probe, palm_probe = generate_synthetic_subject(22, PROFILES["clean"])
    same_probe = np.array_equal(build_template(face_ref, palm_ref).values,
                                build_template(face_probe, palm_probe).values)
    report("end-to-end determinism", same_file and same_probe,
           f"repeated enrol bit-identical: {same_file}, zero-noise probe equals reference: {same_probe}")


def test_dimension_contract():
    subjects = synthetic_subjects(3, 8)
    bad_length = raised = 0
    for k in (2, 3, 4):
        for p in (3, 8, 16):
            config = PipelineConfig.from_mapping({"k": k, "p": p})
            refs = [build_template(s.face_ref, s.palm_ref, config) for s in subjects]
            probes = [build_template(s.face_probe, s.palm_probe, config) for s in subjects]
            bad_length += sum(len(t) != k * p * DESCRIPTOR_LENGTH for t in refs + probes)
            try:
                for probe in probes:
                    knn_verify(probe, refs, 1, 1.0)
                    correlation_verify(probe, refs, 1, 0.9)
            except Exception:
                raised += 1
    report("dimension contract", bad_length == 0 and raised == 0,
           f"9 (k, p) settings, {bad_length} templates of wrong length, {raised} settings raised while matching")
