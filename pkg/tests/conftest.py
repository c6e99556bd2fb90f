from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kpfusion.keypoints import DESCRIPTOR_LENGTH, KeypointSet

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_set(xy=None, descriptors=None, modality="Face", subject_id="s0", capture_id="ref") -> KeypointSet:
    if descriptors is None:
        descriptors = np.zeros((len(xy), DESCRIPTOR_LENGTH))
    descriptors = np.asarray(descriptors, dtype=np.float64)
    n = descriptors.shape[0]
    if xy is None:
        xy = np.column_stack([np.arange(n, dtype=float), np.zeros(n)])
    return KeypointSet(modality, subject_id, capture_id, xy, np.ones(n), np.zeros(n), descriptors)


def line_set(values, modality="Face", subject_id="s0") -> KeypointSet:
    """Points whose descriptors are zero except entry 0, which carries ``values``."""
    desc = np.zeros((len(values), DESCRIPTOR_LENGTH))
    desc[:, 0] = values
    return make_set(descriptors=desc, modality=modality, subject_id=subject_id)


def random_set(rng: np.random.Generator, n: int, modality="Face", subject_id="s0") -> KeypointSet:
    return KeypointSet(modality, subject_id, "ref",
                       rng.uniform(0, 256, size=(n, 2)), rng.uniform(0.5, 8, size=n),
                       rng.uniform(0, 6.28, size=n), rng.gamma(0.5, size=(n, DESCRIPTOR_LENGTH)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def planted_instance(rng: np.random.Generator, n: int, jitter: float = 0.0, desc_noise: float = 0.0,
                     extent: float = 60.0):
    """Face vertices plus a palm copy relabelled by a random permutation, optionally perturbed.

    Returns ``(face_xy, face_desc, palm_xy, palm_desc, perm)`` with
    ``palm[perm[v]]`` the copy of face vertex ``v``.
    """
    face_xy = rng.uniform(0, extent, size=(n, 2))
    face_desc = rng.gamma(0.5, size=(n, DESCRIPTOR_LENGTH))
    perm = rng.permutation(n)
    palm_xy = np.empty_like(face_xy)
    palm_desc = np.empty_like(face_desc)
    palm_xy[perm] = face_xy + jitter * rng.standard_normal((n, 2))
    palm_desc[perm] = np.maximum(face_desc + desc_noise * rng.standard_normal((n, DESCRIPTOR_LENGTH)), 0.0)
    return face_xy, face_desc, palm_xy, palm_desc, perm


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
