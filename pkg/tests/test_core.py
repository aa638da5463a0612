import json
import math

import numpy as np
import pytest

from oracles import brute_force_helstrom, haar_unitary, random_state
from qsdnet import (
    HADAMARD,
    Ensemble,
    PureState,
    Unitary2,
    apply_unitary,
    canonical_ensembles,
    helstrom_bound,
    inner_product,
    nearest_unitary,
    states_equal,
)
from qsdnet.core import H, V, phase_distance
from qsdnet.errors import SingularMatrixError, ValidationError
from qsdnet.receivers import TETRAD_BACKWARD_PRINTED, TETRAD_FORWARD_PRINTED

C8, S8 = math.cos(math.pi / 8), math.sin(math.pi / 8)
PSI1, PSI2 = PureState(C8, S8), PureState(C8, -S8)
PLUS = PureState(1 / math.sqrt(2), 1 / math.sqrt(2))


def test_inner_product_examples():
    assert inner_product(H, H) == 1
    assert inner_product(H, V) == 0
    z = inner_product(PSI1, PSI2)
    assert z.real == pytest.approx(0.7071068, abs=1e-7)
    assert z.imag == 0


def test_inner_product_conjugates_first_argument():
    a = PureState(0, 1j)
    b = PureState(0, 1)
    assert inner_product(a, b) == pytest.approx(-1j)


def test_apply_unitary_examples():
    assert states_equal(apply_unitary(Unitary2.identity(), H), H)
    assert states_equal(apply_unitary(HADAMARD, PLUS), H)
    assert abs(apply_unitary(HADAMARD, PSI1).a0) ** 2 == pytest.approx(0.8535534, abs=1e-7)
    assert abs(apply_unitary(HADAMARD, PSI1).a0) ** 2 == pytest.approx((1 + math.sin(math.pi / 4)) / 2, abs=1e-15)


def test_apply_unitary_preserves_norm():
    rng = np.random.default_rng(1)
    for _ in range(10_000):
        u = Unitary2.from_matrix(haar_unitary(rng))
        out = apply_unitary(u, PureState.from_vector(random_state(rng)))
        assert abs(np.linalg.norm(out.vector) - 1.0) < 1e-12


def test_state_validation():
    with pytest.raises(ValidationError):
        PureState(1, 1)
    with pytest.raises(ValidationError):
        PureState(float("nan"), 0)
    s = PureState.from_vector([3, 4j], normalize=True)
    assert s.a0 == pytest.approx(0.6)
    with pytest.raises(ValidationError):
        PureState.from_vector([0, 0], normalize=True)


def test_unitary_rejects_non_unitary():
    with pytest.raises(ValidationError, match="nearest_unitary"):
        Unitary2.from_matrix(2 * HADAMARD.matrix)
    with pytest.raises(ValidationError):
        Unitary2.from_matrix(np.eye(3))


def test_serialization_field_names():
    d = PLUS.to_dict()
    assert set(d) == {"a0", "a1"}
    assert PureState.from_dict(json.loads(json.dumps(d))) == PLUS
    m = HADAMARD.to_dict()
    assert list(m) == ["m"] and len(m["m"]) == 4 and all(len(p) == 2 for p in m["m"])
    assert Unitary2.from_dict(json.loads(json.dumps(m))) == HADAMARD


def test_nearest_unitary_examples():
    assert np.allclose(nearest_unitary(HADAMARD.matrix).matrix, HADAMARD.matrix, atol=1e-15)
    assert np.allclose(nearest_unitary(2 * HADAMARD.matrix).matrix, HADAMARD.matrix, atol=1e-15)
    u = nearest_unitary(TETRAD_BACKWARD_PRINTED)
    assert np.abs(u.matrix - TETRAD_BACKWARD_PRINTED).max() < 1e-6


def test_printed_tetrad_columns_have_unit_norm():
    for m in (TETRAD_FORWARD_PRINTED, TETRAD_BACKWARD_PRINTED):
        norms = np.linalg.norm(m, axis=0)
        assert np.abs(norms - 1).max() < 1e-5


def test_nearest_unitary_idempotent_and_minimal():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        u = nearest_unitary(m).matrix
        assert np.abs(nearest_unitary(u).matrix - u).max() < 1e-10
        # no random unitary is closer in Frobenius norm
        other = haar_unitary(rng)
        assert np.linalg.norm(m - u) <= np.linalg.norm(m - other) + 1e-12


def test_nearest_unitary_rejects_singular():
    with pytest.raises(SingularMatrixError):
        nearest_unitary(np.array([[1, 1], [1, 1]]))
    with pytest.raises(SingularMatrixError):
        nearest_unitary(np.zeros((2, 2)))


def test_helstrom_examples():
    assert helstrom_bound(H, V, 0.3, 0.7) == 1.0
    assert helstrom_bound(H, H) == 0.5
    assert helstrom_bound(PSI1, PSI2) == pytest.approx(0.8535534, abs=1e-7)
    assert helstrom_bound(PSI1, PSI2) == pytest.approx((1 + math.sqrt(0.5)) / 2, abs=1e-15)


def test_helstrom_symmetry_and_phase_invariance():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a, b = PureState.from_vector(random_state(rng)), PureState.from_vector(random_state(rng))
        p = rng.uniform()
        ref = helstrom_bound(a, b, p, 1 - p)
        assert helstrom_bound(b, a, 1 - p, p) == pytest.approx(ref, abs=1e-15)
        ph = np.exp(1j * rng.uniform(0, 2 * np.pi))
        assert helstrom_bound(PureState.from_vector(ph * a.vector), b, p, 1 - p) == pytest.approx(ref, abs=1e-14)


def test_helstrom_matches_bruteforce_measurement_search():
    rng = np.random.default_rng(4)
    cases = [(PSI1.vector, PSI2.vector)] + [(random_state(rng), random_state(rng)) for _ in range(5)]
    for a, b in cases:
        bf = brute_force_helstrom(a, b)
        assert helstrom_bound(PureState.from_vector(a), PureState.from_vector(b)) == pytest.approx(bf, abs=1e-6)


def test_ensemble_validation():
    with pytest.raises(ValidationError):
        Ensemble((H, V), (0.5, 0.6))
    with pytest.raises(ValidationError):
        Ensemble((H, V), (0.5,))
    with pytest.raises(ValidationError):
        Ensemble((), ())
    with pytest.raises(ValidationError):
        Ensemble((H, V), (1.5, -0.5))
    e = Ensemble((H, V), (0.25, 0.75), ("h", "v"))
    assert e.index("v") == 1
    with pytest.raises(KeyError):
        e.index("x")


def test_canonical_ensembles():
    ens = canonical_ensembles()
    gu, tet = ens["gu"], ens["tetrad"]
    assert gu.priors == (0.25,) * 4 and tet.priors == (0.25,) * 4
    assert ens["binary"].priors == (0.5, 0.5)
    plus, r = gu.states[gu.index("plus")], gu.states[gu.index("R")]
    assert abs(inner_product(plus, r)) ** 2 == pytest.approx(0.5, abs=1e-15)
    for i in range(4):
        for j in range(i + 1, 4):
            assert abs(inner_product(tet.states[i], tet.states[j])) ** 2 == pytest.approx(1 / 3, abs=1e-12)
    assert tet.states[3] == H
    assert states_equal(ens["binary"].states[0], PSI1)


def test_phase_distance():
    assert phase_distance(HADAMARD, 1j * HADAMARD.matrix) == pytest.approx(0, abs=1e-15)
    assert phase_distance(np.eye(2), np.diag([1, -1])) == pytest.approx(1.0)
