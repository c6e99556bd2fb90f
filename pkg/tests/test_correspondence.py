from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import elimination_oracle
from kpfusion.correspondence import (PADDED, ClusterView, CorrespondenceSet, PointCorrespondence, equalize,
                                     match_clusters, vertex_arrays)
from kpfusion.errors import EmptyCluster, InvalidConfig
from kpfusion.keypoints import DESCRIPTOR_LENGTH


def view(desc, cluster_id=0, offset=0, xy=None):
    desc = np.atleast_2d(np.asarray(desc, dtype=float))
    n = desc.shape[0]
    if desc.shape[1] != DESCRIPTOR_LENGTH:
        full = np.zeros((n, DESCRIPTOR_LENGTH))
        full[:, : desc.shape[1]] = desc
        desc = full
    if xy is None:
        xy = np.column_stack([np.arange(n, dtype=float), np.zeros(n)])
    return ClusterView(cluster_id, np.arange(offset, offset + n), xy, desc)


def pairs_of(cs):
    return {(c.face_index, c.palm_index) for c in cs.pairs}


def test_single_points_pair_up():
    cs = match_clusters(view([[1.0]]), view([[5.0]]))
    assert pairs_of(cs) == {(0, 0)}


def test_many_to_one_keeps_minimum():
    face = view([[1.0], [2.0]])
    palm = view([[0.0]])
    cs = match_clusters(face, palm)
    assert [(c.face_index, c.palm_index, c.pair_distance) for c in cs.pairs] == [(0, 0, 1.0)]


def test_random_clusters_match_elimination_oracle():
    rng = np.random.default_rng(3)
    for _ in range(50):
        face = view(rng.gamma(0.5, size=(8, DESCRIPTOR_LENGTH)))
        palm = view(rng.gamma(0.5, size=(5, DESCRIPTOR_LENGTH)))
        dist = np.linalg.norm(face.descriptors[:, None] - palm.descriptors[None], axis=2)
        for ratio in (0.8, 1.0):
            assert pairs_of(match_clusters(face, palm, ratio)) == elimination_oracle(dist.tolist(), ratio)


def test_larger_palm_swaps_roles():
    rng = np.random.default_rng(4)
    face = view(rng.gamma(0.5, size=(4, DESCRIPTOR_LENGTH)))
    palm = view(rng.gamma(0.5, size=(9, DESCRIPTOR_LENGTH)))
    dist = np.linalg.norm(face.descriptors[:, None] - palm.descriptors[None], axis=2)
    swapped = {(f, p) for p, f in elimination_oracle(dist.T.tolist(), 1.0)}
    assert pairs_of(match_clusters(face, palm, 1.0)) == swapped


def test_ratio_test_rejects_ambiguous_claims():
    face = view([[1.0], [10.0], [20.0]])
    palm = view([[0.0], [2.0]])
    # ratios 1.0, 0.8 and 0.9: only the second claim passes at 0.8
    assert pairs_of(match_clusters(face, palm, 0.8)) == {(1, 1)}
    assert pairs_of(match_clusters(face, palm, 1.0)) == {(0, 0), (1, 1)}


def test_empty_cluster_rejected():
    with pytest.raises(EmptyCluster):
        match_clusters(view(np.zeros((0, DESCRIPTOR_LENGTH))), view([[1.0]]))


@settings(max_examples=100)
@given(st.integers(0, 2**31 - 1), st.integers(1, 12), st.integers(1, 12), st.floats(0.3, 1.0))
def test_one_to_one_and_optimal_survivor(seed, nf, npalm, ratio):
    rng = np.random.default_rng(seed)
    face = view(rng.gamma(0.5, size=(nf, DESCRIPTOR_LENGTH)))
    palm = view(rng.gamma(0.5, size=(npalm, DESCRIPTOR_LENGTH)))
    cs = match_clusters(face, palm, ratio)
    fi = [c.face_index for c in cs.pairs]
    pi = [c.palm_index for c in cs.pairs]
    assert len(set(fi)) == len(fi) and len(set(pi)) == len(pi)
    assert len(cs) <= min(nf, npalm)
    if nf >= npalm:
        dist = np.linalg.norm(face.descriptors[:, None] - palm.descriptors[None], axis=2)
        nearest = dist.argmin(axis=1)
        ordered = np.sort(dist, axis=1)
        passing = ordered[:, 0] <= ratio * ordered[:, 1] if npalm > 1 else np.ones(nf, dtype=bool)
        for c in cs.pairs:
            # only claims that pass the ratio test contest a palm point
            rivals = dist[(nearest == c.palm_index) & passing, c.palm_index]
            assert c.pair_distance == pytest.approx(rivals.min(), rel=1e-12)
        assert {(c.face_index, c.palm_index) for c in cs.pairs} == elimination_oracle(dist.tolist(), ratio)


def _cs(distances):
    return CorrespondenceSet(tuple(PointCorrespondence(i, 100 + i, d) for i, d in enumerate(distances)))


def test_equalize_identity():
    cs = _cs(np.linspace(0.1, 1.0, 10))
    assert equalize(cs, 10).pairs == cs.pairs


def test_equalize_keeps_smallest():
    cs = _cs([5.0, 1.0, 9.0, 2.0, 0.5, 7.0, 3.0, 8.0, 6.0, 4.0])
    assert [c.face_index for c in equalize(cs, 4).pairs] == [1, 3, 4, 6]


def test_equalize_ties_by_face_index():
    cs = _cs([1.0, 1.0, 1.0, 1.0, 1.0])
    assert [c.face_index for c in equalize(cs, 3).pairs] == [0, 1, 2]


def test_equalize_pads():
    out = equalize(_cs([1.0, 2.0]), 4)
    assert len(out) == 4 and out.padded_count == 2
    assert all(c.face_index == PADDED and c.palm_index == PADDED for c in out.pairs[2:])


@settings(max_examples=60)
@given(st.lists(st.floats(0, 100), max_size=20), st.integers(3, 16))
def test_equalize_cardinality(distances, p):
    assert len(equalize(_cs(distances), p)) == p


def test_equalize_rejects_small_p():
    with pytest.raises(InvalidConfig):
        equalize(_cs([1.0]), 2)


def test_vertex_arrays_sentinels_at_origin():
    face = view([[1.0], [2.0]], xy=[[5.0, 6.0], [7.0, 8.0]])
    palm = view([[1.5]], xy=[[1.0, 1.0]])
    cs = equalize(match_clusters(face, palm, 1.0), 3)
    (fi, fxy, fd), (pi, pxy, pd) = vertex_arrays(cs, face, palm)
    assert fi.tolist() == [0, PADDED, PADDED]
    assert fxy[1:].tolist() == [[0.0, 0.0], [0.0, 0.0]]
    assert not fd[1:].any() and not pd[1:].any()
    assert pxy[0].tolist() == [1.0, 1.0]
