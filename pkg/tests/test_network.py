import math

import numpy as np
import pytest

from oracles import haar_unitary, ledger_distribution, random_state
from qsdnet import (
    HADAMARD,
    ExtractionSchedule,
    NetworkConfig,
    PureState,
    Unitary2,
    canonical_ensembles,
    conditional_distribution,
    cumulative_correct,
    decay_free_distribution,
    evolve,
    gu_receiver,
    helstrom_bound,
    loop_operator,
)
from qsdnet.core import H, V, is_proportional_to_identity
from qsdnet.errors import ArityError, DegenerateInputError, ValidationError
from qsdnet.network import TimeBinnedDistribution

ENS = canonical_ensembles()
PSI1 = ENS["binary"].states[0]
PLUS = ENS["gu"].states[0]


def random_config(rng, max_loops=None):
    sched = ExtractionSchedule(
        float(rng.uniform(0.01, 1.0)),
        float(rng.uniform(0.01, 1.0)) if rng.uniform() < 0.5 else None,
        bool(rng.uniform() < 0.5),
    )
    m = int(max_loops or rng.integers(2, 20))
    return NetworkConfig(Unitary2.from_matrix(haar_unitary(rng)), Unitary2.from_matrix(haar_unitary(rng)), sched, m)


def schedule_extraction(s: ExtractionSchedule, n: int) -> list[float]:
    out = [s.default_extraction_prob] * n
    if s.first_step_override is not None:
        out[0] = s.first_step_override
    return out


def test_evolve_binary_example():
    cfg = NetworkConfig(HADAMARD, HADAMARD, ExtractionSchedule(0.5), 12)
    d = evolve(cfg, PSI1)
    assert d.bins[0, 0] == pytest.approx(0.4267767, abs=1e-7)
    assert d.bins[0, 1] == pytest.approx(0.0732233, abs=1e-7)
    assert d.bins[1, 0] == pytest.approx(0.2133883, abs=1e-7)
    for k in range(12):
        assert d.bins[k, 0] == pytest.approx(0.5 ** (k + 1) * (1 + math.sqrt(0.5)) / 2, abs=1e-15)


def test_evolve_full_extraction():
    d = evolve(NetworkConfig(HADAMARD, HADAMARD, ExtractionSchedule(1.0), 5), PSI1)
    assert d.bins[0].sum() == pytest.approx(1.0, abs=1e-15)
    assert np.all(d.bins[1:] == 0)
    assert d.residual == 0


def test_evolve_gu_plus_first_bin():
    uf, ub = gu_receiver()
    d = evolve(NetworkConfig(uf, ub, ExtractionSchedule(0.3)), PLUS)
    assert d.bins[0, 0] == pytest.approx(0.3, abs=1e-15)
    assert d.bins[0, 1] == pytest.approx(0.0, abs=1e-15)


def test_evolve_matches_amplitude_ledger():
    rng = np.random.default_rng(10)
    for _ in range(500):
        cfg = random_config(rng)
        psi = random_state(rng)
        d = evolve(cfg, PureState.from_vector(psi))
        bins, residual = ledger_distribution(
            cfg.u_forward.matrix, cfg.u_backward.matrix, psi, schedule_extraction(cfg.schedule, cfg.max_loops), cfg.max_loops
        )
        assert np.abs(d.bins - bins).max() < 1e-12
        assert abs(d.residual - residual) < 1e-12


def test_probability_conservation():
    rng = np.random.default_rng(11)
    for _ in range(10_000):
        cfg = random_config(rng)
        d = evolve(cfg, PureState.from_vector(random_state(rng)))
        assert np.all(d.bins >= 0)
        assert abs(d.total - 1.0) < 1e-12


def test_envelope_law():
    rng = np.random.default_rng(12)
    for _ in range(200):
        cfg = random_config(rng)
        cfg = NetworkConfig(cfg.u_forward, cfg.u_backward, ExtractionSchedule(cfg.schedule.default_extraction_prob), 15)
        d = evolve(cfg, PureState.from_vector(random_state(rng)))
        t = 1 - cfg.schedule.default_extraction_prob
        k = np.arange(1, 16)
        assert np.abs(d.bins.sum(axis=1) - t ** (k - 1) * (1 - t)).max() < 1e-12


def test_schedule_experimental():
    s = ExtractionSchedule.experimental()
    assert s.extraction_probs(3).tolist() == [0.7, 0.3, 0.3]
    assert s.first_step_discarded
    env = s.envelope(3)
    assert env == pytest.approx([0.7, 0.3 * 0.3, 0.3 * 0.7 * 0.3])
    with pytest.raises(ValidationError):
        ExtractionSchedule(0.0)
    with pytest.raises(ValidationError):
        ExtractionSchedule(0.3, 1.2)
    with pytest.raises(ValidationError):
        NetworkConfig(HADAMARD, HADAMARD, s, 0)


def test_conditional_examples():
    d = TimeBinnedDistribution([[0, 0], [0.4, 0], [0, 0]], 0.6)
    t = conditional_distribution(d)
    assert t.probs[1, 0] == 1.0 and t.probs.sum() == 1.0
    t = conditional_distribution(TimeBinnedDistribution([[0.005, 0], [0.005, 0]], 0.99))
    assert t.probs[:, 0].tolist() == [0.5, 0.5]
    cfg = NetworkConfig(HADAMARD, HADAMARD, ExtractionSchedule(0.5), 12)
    t = conditional_distribution(evolve(cfg, PSI1))
    per_bin = t.probs[:, 0] / t.probs.sum(axis=1)
    assert np.abs(per_bin - 0.8535534).max() < 1e-7
    with pytest.raises(DegenerateInputError):
        conditional_distribution(TimeBinnedDistribution([[0, 0]], 1.0))


def test_conditional_drops_first_bin_when_discarding():
    cfg = NetworkConfig(HADAMARD, HADAMARD, ExtractionSchedule.experimental(), 6)
    t = conditional_distribution(evolve(cfg, PSI1))
    assert t.bin_indices.tolist() == [2, 3, 4, 5, 6]
    assert t.probs.sum() == pytest.approx(1.0, abs=1e-15)


def test_decay_free_examples():
    cfg = NetworkConfig(HADAMARD, HADAMARD, ExtractionSchedule(0.5), 12)
    t = decay_free_distribution(evolve(cfg, PSI1), cfg.schedule)
    assert np.abs(t.probs - [0.8535534, 0.1464466]).max() < 1e-7
    cfg = NetworkConfig(HADAMARD, HADAMARD, ExtractionSchedule(1.0), 1)
    d = evolve(cfg, PSI1)
    assert np.allclose(decay_free_distribution(d, cfg.schedule).probs, d.bins / d.bins.sum(), atol=1e-15)


def test_decay_free_gu_is_four_periodic():
    uf, ub = gu_receiver()
    cfg = NetworkConfig(uf, ub, ExtractionSchedule(0.3), 12)
    for s in ENS["gu"].states:
        t = decay_free_distribution(evolve(cfg, s), cfg.schedule)
        assert np.abs(t.probs[4:] - t.probs[:-4]).max() < 1e-9


def test_periodicity_invariant_for_random_period_four_loops():
    # U_F arbitrary, U_B = U_F^dag R with R^4 = phase: loop operator U_F U_F^dag R = R
    rng = np.random.default_rng(13)
    for _ in range(100):
        uf = haar_unitary(rng)
        w = haar_unitary(rng)
        roots = np.exp(1j * (rng.uniform(0, 2 * np.pi) + np.pi / 2 * rng.integers(0, 4, size=2)))
        r = w @ np.diag(roots) @ w.conj().T
        cfg = NetworkConfig(Unitary2.from_matrix(uf), Unitary2.from_matrix(uf.conj().T @ r), ExtractionSchedule(0.3), 13)
        assert is_proportional_to_identity(loop_operator(cfg).power(4))
        t = decay_free_distribution(evolve(cfg, PureState.from_vector(random_state(rng))), cfg.schedule)
        assert np.abs(t.probs[4:] - t.probs[:-4]).max() < 1e-9


def test_cumulative_correct_examples():
    for p in (0.1, 0.3, 0.5):
        cfg = NetworkConfig(HADAMARD, HADAMARD, ExtractionSchedule(p), 12)
        curve = cumulative_correct(cfg, ENS["binary"])
        assert len(curve) == 12 and all(isinstance(x, float) for x in curve)
        assert max(abs(x - helstrom_bound(*ENS["binary"].states)) for x in curve) < 1e-9
    ident = NetworkConfig(Unitary2.identity(), Unitary2.identity(), ExtractionSchedule(0.3), 8)
    assert cumulative_correct(ident, ENS["orthogonal"]) == [1.0] * 8
    assert cumulative_correct(ident, ENS["orthogonal"], sink_map=(6, 5)) == [0.0] * 8
    with pytest.raises(ArityError):
        cumulative_correct(ident, ENS["gu"])


def test_loop_operator_examples():
    assert is_proportional_to_identity(loop_operator(NetworkConfig(HADAMARD, HADAMARD)), 1e-15)
    uf, ub = gu_receiver()
    ul = loop_operator(NetworkConfig(uf, ub)).matrix
    assert np.abs(ul - np.array([[1, 1j], [1j, 1]]) / math.sqrt(2)).max() < 1e-12


def test_serialization_keys():
    d = evolve(NetworkConfig(HADAMARD, HADAMARD), H)
    assert set(d.to_dict()) == {"bins", "residual"}
    assert evolve(NetworkConfig(Unitary2.identity(), Unitary2.identity()), V).bins[0].tolist() == [0.0, 0.3]
