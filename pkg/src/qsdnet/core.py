"""Two-level states, unitaries, ensembles and closed-form discrimination bounds.

Basis convention used everywhere in the package: index 0 is ``|H>`` (nodes
1/3/5), index 1 is ``|V>`` (nodes 2/4/6).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SingularMatrixError, ValidationError

NORM_TOL = 1e-12
UNITARY_TOL = 1e-10
PRIOR_TOL = 1e-12


def _as_complex(x) -> complex:
    z = complex(x)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ValidationError(f"non-finite amplitude {z!r}")
    return z


def complex_to_pair(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


def pair_to_complex(pair) -> complex:
    if len(pair) != 2:
        raise ValidationError(f"expected [re, im] pair, got {pair!r}")
    return _as_complex(complex(float(pair[0]), float(pair[1])))


@dataclass(frozen=True)
class PureState:
    """Normalized qubit state ``a0|H> + a1|V>``."""

    a0: complex
    a1: complex

    def __post_init__(self):
        object.__setattr__(self, "a0", _as_complex(self.a0))
        object.__setattr__(self, "a1", _as_complex(self.a1))
        norm = abs(self.a0) ** 2 + abs(self.a1) ** 2
        if abs(norm - 1.0) > NORM_TOL:
            raise ValidationError(f"state not normalized: |a0|^2+|a1|^2 = {norm!r}")

    @classmethod
    def from_vector(cls, v, normalize: bool = False) -> "PureState":
        v = np.asarray(v, dtype=complex).reshape(2)
        if normalize:
            n = np.linalg.norm(v)
            if n == 0:
                raise ValidationError("cannot normalize the zero vector")
            v = v / n
        return cls(v[0], v[1])

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.a0, self.a1], dtype=complex)

    def to_dict(self) -> dict:
        return {"a0": complex_to_pair(self.a0), "a1": complex_to_pair(self.a1)}

    @classmethod
    def from_dict(cls, d: dict, normalize: bool = False) -> "PureState":
        return cls.from_vector([pair_to_complex(d["a0"]), pair_to_complex(d["a1"])], normalize=normalize)


H = PureState(1, 0)
V = PureState(0, 1)


@dataclass(frozen=True)
class Unitary2:
    """2x2 unitary, stored entrywise. Construction rejects non-unitary input."""

    m00: complex
    m01: complex
    m10: complex
    m11: complex

    def __post_init__(self):
        for name in ("m00", "m01", "m10", "m11"):
            object.__setattr__(self, name, _as_complex(getattr(self, name)))
        m = self.matrix
        defect = np.abs(m.conj().T @ m - np.eye(2)).max()
        if defect > UNITARY_TOL:
            raise ValidationError(
                f"matrix is not unitary (max |U^dag U - I| = {defect:.3g}); "
                "use nearest_unitary to project it explicitly"
            )

    @classmethod
    def from_matrix(cls, m) -> "Unitary2":
        m = np.asarray(m, dtype=complex)
        if m.shape != (2, 2):
            raise ValidationError(f"expected a 2x2 matrix, got shape {m.shape}")
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    @classmethod
    def identity(cls) -> "Unitary2":
        return cls(1, 0, 0, 1)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.m00, self.m01], [self.m10, self.m11]], dtype=complex)

    @property
    def dagger(self) -> "Unitary2":
        return Unitary2.from_matrix(self.matrix.conj().T)

    def __matmul__(self, other):
        if isinstance(other, Unitary2):
            return Unitary2.from_matrix(self.matrix @ other.matrix)
        if isinstance(other, PureState):
            return apply_unitary(self, other)
        return NotImplemented

    def power(self, n: int) -> "Unitary2":
        return Unitary2.from_matrix(np.linalg.matrix_power(self.matrix, n))

    def to_dict(self) -> dict:
        return {"m": [complex_to_pair(z) for z in (self.m00, self.m01, self.m10, self.m11)]}

    @classmethod
    def from_dict(cls, d: dict) -> "Unitary2":
        entries = d["m"]
        if len(entries) != 4:
            raise ValidationError(f"'m' must hold 4 [re, im] entries, got {len(entries)}")
        return cls(*(pair_to_complex(p) for p in entries))


HADAMARD = Unitary2.from_matrix(np.array([[1, 1], [1, -1]]) / math.sqrt(2))


@dataclass(frozen=True)
class Ensemble:
    """Hypothesis set: states with prior probabilities and optional labels."""

    states: tuple[PureState, ...]
    priors: tuple[float, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        states = tuple(self.states)
        priors = tuple(float(p) for p in self.priors)
        labels = tuple(self.labels) or tuple(f"psi{i + 1}" for i in range(len(states)))
        if not states:
            raise ValidationError("ensemble needs at least one state")
        if len(priors) != len(states) or len(labels) != len(states):
            raise ValidationError("states, priors and labels must have equal length")
        if any(not math.isfinite(p) or p < 0 for p in priors):
            raise ValidationError(f"priors must be finite and non-negative, got {priors}")
        if abs(sum(priors) - 1.0) > PRIOR_TOL:
            raise ValidationError(f"priors sum to {sum(priors)!r}, not 1")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def uniform(cls, states: Sequence[PureState], labels: Sequence[str] = ()) -> "Ensemble":
        n = len(states)
        return cls(tuple(states), (1.0 / n,) * n, tuple(labels))

    def __len__(self) -> int:
        return len(self.states)

    @property
    def vectors(self) -> np.ndarray:
        """States stacked as an ``(n, 2)`` complex array."""
        return np.array([s.vector for s in self.states])

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no state labelled {label!r}; have {list(self.labels)}") from None

    def to_dict(self) -> dict:
        return {
            "states": [s.to_dict() for s in self.states],
            "priors": list(self.priors),
            "labels": list(self.labels),
        }


def inner_product(a: PureState, b: PureState) -> complex:
    """<a|b>, conjugate-linear in the first argument."""
    return a.a0.conjugate() * b.a0 + a.a1.conjugate() * b.a1


def apply_unitary(u: Unitary2, s: PureState) -> PureState:
    v = u.matrix @ s.vector
    # absorb roundoff so chained products stay inside the 1e-12 norm tolerance
    return PureState.from_vector(v / np.linalg.norm(v))


def fidelity(a: PureState, b: PureState) -> float:
    return abs(inner_product(a, b)) ** 2


def states_equal(a: PureState, b: PureState, tol: float = 1e-10) -> bool:
    """Equality up to global phase: ``|<a|b>| = 1`` within ``tol``."""
    return 1.0 - abs(inner_product(a, b)) <= tol


def phase_distance(a, b) -> float:
    """Phase-insensitive distance ``1 - |tr(a^dag b)|/2`` between 2x2 unitaries.

    Zero exactly when ``b = exp(i phi) a``. This is the operator analogue of
    ``1 - |<a|b>|`` used for states.
    """
    a = a.matrix if isinstance(a, Unitary2) else np.asarray(a, dtype=complex)
    b = b.matrix if isinstance(b, Unitary2) else np.asarray(b, dtype=complex)
    return float(1.0 - abs(np.trace(a.conj().T @ b)) / 2.0)


def max_entry_distance_up_to_phase(a, b) -> float:
    """Largest entrywise deviation ``|b - e^{i phi} a|`` at the best-aligning phase."""
    a = a.matrix if isinstance(a, Unitary2) else np.asarray(a, dtype=complex)
    b = b.matrix if isinstance(b, Unitary2) else np.asarray(b, dtype=complex)
    t = np.trace(a.conj().T @ b)
    phase = t / abs(t) if abs(t) > 0 else 1.0
    return float(np.abs(b - phase * a).max())


def is_proportional_to_identity(u, tol: float = 1e-9) -> bool:
    return phase_distance(np.eye(2), u) <= tol and max_entry_distance_up_to_phase(np.eye(2), u) <= tol


def nearest_unitary(m) -> Unitary2:
    """Unitary factor ``U`` of the polar decomposition ``m = U P``.

    This is the unitary closest to ``m`` in Frobenius norm.
    """
    m = np.asarray(m.matrix if isinstance(m, Unitary2) else m, dtype=complex)
    if m.shape != (2, 2) or not np.all(np.isfinite(m)):
        raise SingularMatrixError(f"expected a finite 2x2 matrix, got {m!r}")
    w, s, vh = np.linalg.svd(m)
    if s[0] == 0 or s[-1] / s[0] < 1e-12:
        raise SingularMatrixError(f"matrix is singular (singular values {s}); no unitary factor")
    return Unitary2.from_matrix(w @ vh)


def helstrom_bound(psi1: PureState, psi2: PureState, p1: float = 0.5, p2: float = 0.5) -> float:
    """Maximal success probability for telling ``psi1`` from ``psi2``."""
    if p1 < 0 or p2 < 0 or abs(p1 + p2 - 1.0) > PRIOR_TOL:
        raise ValidationError(f"invalid priors ({p1}, {p2})")
    overlap2 = abs(inner_product(psi1, psi2)) ** 2
    return 0.5 * (1.0 + math.sqrt(max(0.0, 1.0 - 4.0 * p1 * p2 * overlap2)))


def canonical_ensembles() -> dict[str, Ensemble]:
    """The binary pair, the geometrically uniform set and the tetrad set.

    An orthogonal ``{|H>, |V>}`` pair is included as a sanity fixture.
    """
    c, s = math.cos(math.pi / 8), math.sin(math.pi / 8)
    r2, r3 = math.sqrt(2), math.sqrt(3)
    w = complex(math.cos(2 * math.pi / 3), math.sin(2 * math.pi / 3))
    binary = Ensemble.uniform([PureState(c, s), PureState(c, -s)], ("psi1", "psi2"))
    gu = Ensemble.uniform(
        [
            PureState(1 / r2, 1 / r2),
            PureState(1 / r2, -1 / r2),
            PureState(1 / r2, 1j / r2),
            PureState(1 / r2, -1j / r2),
        ],
        ("plus", "minus", "R", "L"),
    )
    tetrad = Ensemble.uniform(
        [
            PureState(-1 / r3, r2 * w.conjugate() / r3),
            PureState(-1 / r3, r2 * w / r3),
            PureState(-1 / r3, r2 / r3),
            PureState(1, 0),
        ],
        ("psi1", "psi2", "psi3", "psi4"),
    )
    orthogonal = Ensemble.uniform([H, V], ("H", "V"))
    return {"binary": binary, "gu": gu, "tetrad": tetrad, "orthogonal": orthogonal}
