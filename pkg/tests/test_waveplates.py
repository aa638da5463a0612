import math

import numpy as np
import pytest

from oracles import haar_unitary, jones_retarder, phase_free_distance
from qsdnet import HADAMARD, waveplate_decomposition
from qsdnet.waveplates import hwp, qhq, qwp, reconstruction_error


def test_jones_matrices_match_textbook_form():
    rng = np.random.default_rng(30)
    for t in rng.uniform(0, math.pi, size=20):
        assert np.abs(qwp(t) - jones_retarder(math.pi / 2, t)).max() < 1e-15
        assert np.abs(hwp(t) - jones_retarder(math.pi, t)).max() < 1e-15
    # horizontal fast axis: QWP = diag(1, i), HWP = diag(1, -1)
    assert np.allclose(qwp(0), np.diag([1, 1j]))
    assert np.allclose(hwp(0), np.diag([1, -1]))


def test_round_trip_known_triple():
    u = qwp(1.1) @ hwp(0.7) @ qwp(0.3)
    s = waveplate_decomposition(u)
    assert reconstruction_error(u, s) < 1e-8
    assert phase_free_distance(qhq(s.qwp1, s.hwp, s.qwp2), u) < 1e-8


def test_identity_is_reachable():
    s = waveplate_decomposition(np.eye(2))
    w = qhq(s.qwp1, s.hwp, s.qwp2)
    assert phase_free_distance(w, np.eye(2)) < 1e-8
    assert abs(abs(w[0, 0]) - 1) < 1e-8 and abs(w[0, 1]) < 1e-8


def test_hadamard_against_grid_search():
    s = waveplate_decomposition(HADAMARD)
    solver = phase_free_distance(qhq(s.qwp1, s.hwp, s.qwp2), HADAMARD.matrix)
    assert solver < 1e-8
    # dense grid over all three angles; the solver must be at least as good
    g = np.linspace(0, math.pi, 73)[:-1]
    q = np.stack([qwp(t) for t in g])
    h = np.stack([hwp(t) for t in g])
    w = np.einsum("aij,bjk,ckl->cbail", q, h, q).reshape(-1, 2, 2)
    overlap = np.abs(np.einsum("nij,ij->n", w.conj(), HADAMARD.matrix)) / 2
    best = int(np.argmax(overlap))
    assert 1 - overlap[best] < 1e-3
    assert solver <= phase_free_distance(w[best], HADAMARD.matrix) + 1e-12


def test_angles_in_range_and_haar_round_trip():
    rng = np.random.default_rng(31)
    worst = 0.0
    for _ in range(300):
        u = haar_unitary(rng)
        s = waveplate_decomposition(u)
        assert all(0 <= a < math.pi for a in (s.qwp1, s.hwp, s.qwp2))
        worst = max(worst, phase_free_distance(qhq(s.qwp1, s.hwp, s.qwp2), u), reconstruction_error(u, s))
    assert worst < 1e-8


def test_degenerate_axes():
    # rotations that fix the circular pole take the fallback branch
    for u in (np.diag([1, 1j]), np.diag([1, -1]), np.array([[0, 1], [1, 0]]), np.diag([np.exp(0.3j), np.exp(-0.3j)])):
        s = waveplate_decomposition(u)
        assert reconstruction_error(u, s) < 1e-8


@pytest.mark.parametrize("angles", [(0.0, 0.0, 0.0), (0.5, 0.5, 0.5), (3.0, 0.1, 1.5)])
def test_round_trip_parametrized(angles):
    u = qhq(*angles)
    assert reconstruction_error(u, waveplate_decomposition(u)) < 1e-8
