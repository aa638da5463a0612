"""Receiver synthesis: closed-form binary receiver, built-in four-state
receivers, and a restarted downhill-simplex search for general ensembles."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import permutations
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .core import Ensemble, PureState, Unitary2, inner_product, nearest_unitary
from .errors import DegenerateInputError, ValidationError
from .network import ExtractionSchedule, NetworkConfig, SINKS, _sinker_populations

# Printed tetrad receiver entries (without their 1/sqrt(2) prefactor).
TETRAD_FORWARD_PRINTED = np.array([[0.953021, 0.302905], [-0.302905, 0.953021]], dtype=complex)
TETRAD_BACKWARD_PRINTED = np.array(
    [[-0.674645 + 0.216571j, 0.2118 - 0.673121j], [-0.2118 - 0.673121j, -0.674645 - 0.216571j]]
)
TARGET_LOOP = np.array([[1, 1j], [1j, 1]]) / math.sqrt(2)


@dataclass(frozen=True)
class UnitaryParams:
    """U(2) as ``e^{i phase} [[e^{i phi1} cos t, -e^{i phi2} sin t], [e^{-i phi2} sin t, e^{-i phi1} cos t]]``."""

    theta: float
    phi1: float
    phi2: float
    phase: float = 0.0

    def matrix(self) -> np.ndarray:
        return _params_matrix(self.theta, self.phi1, self.phi2, self.phase)

    def unitary(self) -> Unitary2:
        return Unitary2.from_matrix(self.matrix())

    @classmethod
    def from_unitary(cls, u) -> "UnitaryParams":
        m = u.matrix if isinstance(u, Unitary2) else np.asarray(u, dtype=complex)
        phase = np.angle(np.linalg.det(m)) / 2
        s = m * np.exp(-1j * phase)
        a, b = s[0, 0], s[1, 0]
        return cls(float(math.atan2(abs(b), abs(a))), float(np.angle(a)), float(-np.angle(b)), float(phase))


def _params_matrix(theta, phi1, phi2, phase=0.0) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.exp(1j * phase) * np.array(
        [[np.exp(1j * phi1) * c, -np.exp(1j * phi2) * s], [np.exp(-1j * phi2) * s, np.exp(-1j * phi1) * c]]
    )


def _gauged_matrix(x) -> np.ndarray:
    """Unitary with its (0, 0) entry real and non-negative; three parameters."""
    theta, phi1, phi2 = x
    return _params_matrix(theta, phi1, phi2, -phi1)


@dataclass(frozen=True)
class ObjectiveSpec:
    """What the search optimizes.

    ``map_error`` minimizes the single-copy MAP error of the ensemble's
    conditional outcome table. ``bin_assignment_margin`` maximizes, on one
    sink's decay-free distribution over the first ``window`` bins, the worst
    margin by which each bin's assigned state beats the others, with every
    state assigned to at least one bin.
    """

    variant: str = "map_error"
    window: int = 4
    sink: int = 5
    schedule: ExtractionSchedule = field(default_factory=ExtractionSchedule)
    max_loops: int = 12
    priors: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.variant not in ("map_error", "bin_assignment_margin"):
            raise ValidationError(f"unknown objective variant {self.variant!r}")
        if self.sink not in SINKS:
            raise ValidationError(f"sink must be 5 or 6, got {self.sink}")
        if self.window < 1:
            raise ValidationError("window must be positive")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "window": self.window,
            "sink": self.sink,
            "schedule": self.schedule.to_dict(),
            "max_loops": self.max_loops,
            "priors": None if self.priors is None else list(self.priors),
        }


def binary_optimal(psi1: PureState, psi2: PureState, priors=(0.5, 0.5)) -> tuple[Unitary2, Unitary2]:
    """Receiver repeating the Helstrom measurement at every extraction step.

    ``U_F`` maps the positive eigenvector of ``p1|psi1><psi1| - p2|psi2><psi2|``
    to sink 5 and the negative one to sink 6; ``U_B = U_F^dag`` makes the loop
    operator the identity.
    """
    if 1.0 - abs(inner_product(psi1, psi2)) < 1e-12:
        raise DegenerateInputError("states are identical up to phase; nothing to discriminate")
    p1, p2 = priors
    a, b = psi1.vector, psi2.vector
    gamma = p1 * np.outer(a, a.conj()) - p2 * np.outer(b, b.conj())
    _, vecs = np.linalg.eigh(gamma)
    basis = []
    for v in (vecs[:, 1], vecs[:, 0]):
        lead = v[np.argmax(np.abs(v) > 1e-12)]
        basis.append(v * abs(lead) / lead)
    uf = nearest_unitary(np.array(basis).conj())
    return uf, uf.dagger


def gu_receiver() -> tuple[Unitary2, Unitary2]:
    """Published receiver for the ``{|+>, |->, |R>, |L>}`` set."""
    r2 = math.sqrt(2)
    uf = Unitary2.from_matrix(np.array([[1, 1], [1, -1]]) / r2)
    ub = Unitary2.from_matrix(np.array([[(1 + 1j) / r2, (1 + 1j) / r2], [(1 - 1j) / r2, (1j - 1) / r2]]) / r2)
    return uf, ub


def tetrad_receiver() -> tuple[Unitary2, Unitary2]:
    """Published tetrad receiver, projected onto the unitaries.

    The printed 6-digit entries are unitary to about 5e-7, short of the
    construction tolerance, so both go through :func:`nearest_unitary`.
    """
    return nearest_unitary(TETRAD_FORWARD_PRINTED), nearest_unitary(TETRAD_BACKWARD_PRINTED)


def receiver_config(
    receiver: tuple[Unitary2, Unitary2], schedule: ExtractionSchedule | None = None, max_loops: int = 12
) -> NetworkConfig:
    return NetworkConfig(receiver[0], receiver[1], schedule or ExtractionSchedule(), max_loops)


class _Objective:
    """Fast evaluation of an :class:`ObjectiveSpec` on raw matrices (no validation)."""

    def __init__(self, ensemble: Ensemble, spec: ObjectiveSpec):
        n = len(ensemble)
        if n > 4:
            raise ValidationError(f"receiver search is scoped to at most 4 states, got {n}")
        self.spec = spec
        self.vectors = ensemble.vectors
        self.priors = np.asarray(spec.priors if spec.priors is not None else ensemble.priors, dtype=float)
        if spec.variant == "bin_assignment_margin":
            if spec.window < n:
                raise ValidationError(f"window {spec.window} is shorter than the number of states {n}")
            self.start = 1 if spec.schedule.first_step_discarded else 0
            self.n_bins = self.start + spec.window
            self.perms = np.array(list(permutations(range(spec.window), n)))
            used = np.zeros((self.perms.shape[0], spec.window), dtype=bool)
            np.put_along_axis(used, self.perms, True, axis=1)
            self.unused = ~used
        else:
            self.n_bins = spec.max_loops
            env = spec.schedule.envelope(spec.max_loops)
            if spec.schedule.first_step_discarded:
                env[0] = 0.0
            self.env = env

    def table(self, uf: np.ndarray, ub: np.ndarray) -> np.ndarray:
        pops = _sinker_populations(uf, ub, self.vectors, self.n_bins)
        w = pops * self.env[None, :, None]
        w /= w.sum(axis=(1, 2), keepdims=True)
        return w.reshape(w.shape[0], -1)

    def error(self, uf: np.ndarray, ub: np.ndarray) -> float:
        return float(1.0 - (self.priors[:, None] * self.table(uf, ub)).max(axis=0).sum())

    def margin(self, uf: np.ndarray, ub: np.ndarray) -> float:
        pops = _sinker_populations(uf, ub, self.vectors, self.n_bins)
        d = pops[:, self.start :, SINKS.index(self.spec.sink)]
        n = d.shape[0]
        g = np.empty_like(d)
        for j in range(n):
            g[j] = d[j] - np.delete(d, j, axis=0).max(axis=0)
        best_per_bin = g.max(axis=0)
        assigned = g[np.arange(n)[None, :], self.perms].min(axis=1)
        rest = np.where(self.unused, best_per_bin[None, :], np.inf).min(axis=1)
        return float(np.minimum(assigned, rest).max())

    def loss(self, x) -> float:
        uf, ub = _gauged_matrix(x[:3]), _gauged_matrix(x[3:])
        if self.spec.variant == "map_error":
            return self.error(uf, ub)
        return -self.margin(uf, ub)

    def report(self, loss: float) -> float:
        return loss if self.spec.variant == "map_error" else -loss


@dataclass
class OptimizationResult:
    u_forward: Unitary2
    u_backward: Unitary2
    objective: float
    variant: str
    seed: int
    restarts: int
    status: str
    best_restart: int
    trace: list[tuple[int, int, float]]

    @property
    def receiver(self) -> tuple[Unitary2, Unitary2]:
        return self.u_forward, self.u_backward

    def to_dict(self) -> dict:
        return {
            "u_forward": self.u_forward.to_dict(),
            "u_backward": self.u_backward.to_dict(),
            "objective": self.objective,
            "variant": self.variant,
            "seed": self.seed,
            "restarts": self.restarts,
            "status": self.status,
            "best_restart": self.best_restart,
        }


def _random_start(rng: np.random.Generator) -> np.ndarray:
    # theta from arcsin(sqrt(u)) gives |U_00|^2 uniform, as for Haar measure
    t = np.arcsin(np.sqrt(rng.uniform(size=2)))
    ph = rng.uniform(0, 2 * np.pi, size=4)
    return np.array([t[0], ph[0], ph[1], t[1], ph[2], ph[3]])


def _run_restart(obj: _Objective, seed: int, r: int, max_iters: int, xatol: float, fatol: float):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
    x = _random_start(rng)
    start_loss = obj.loss(x)
    best_x, best_loss = x, start_loss
    trace = [(r, 0, obj.report(start_loss))]
    it = 0
    converged = False
    # a fresh simplex around the previous optimum escapes premature collapse
    for _ in range(3):
        res = minimize(
            obj.loss,
            best_x,
            method="Nelder-Mead",
            options={"maxiter": max(1, max_iters - it), "xatol": xatol, "fatol": fatol, "adaptive": True},
        )
        it += int(res.nit)
        improved = res.fun < best_loss - fatol
        if res.fun <= best_loss:
            best_x, best_loss = res.x, float(res.fun)
        trace.append((r, it, obj.report(best_loss)))
        converged = bool(res.success)
        if not improved or it >= max_iters:
            break
    return best_x, best_loss, converged, trace


def optimize(
    ensemble: Ensemble,
    objective: ObjectiveSpec | None = None,
    restarts: int = 32,
    max_iters: int = 4000,
    seed: int = 0,
    xatol: float = 1e-9,
    fatol: float = 1e-12,
    threads: int = 1,
) -> OptimizationResult:
    """Best ``(U_F, U_B)`` over ``restarts`` simplex searches from random starts.

    Each unitary is gauged so its (0, 0) entry is real, leaving 6 real
    parameters. Restart ``r`` seeds from ``SeedSequence(seed, spawn_key=(r,))``;
    the winner is the lowest loss, ties to the lowest restart index, so the
    result does not depend on ``threads``. ``status`` is ``"converged"`` when
    the winning restart met both tolerances and ``"max_iters"`` otherwise.
    """
    objective = objective or ObjectiveSpec()
    if restarts < 1:
        raise ValidationError("restarts must be >= 1")
    obj = _Objective(ensemble, objective)

    def job(r):
        return _run_restart(obj, seed, r, max_iters, xatol, fatol)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(job, range(restarts)))
    else:
        results = [job(r) for r in range(restarts)]
    best = min(range(restarts), key=lambda r: (results[r][1], r))
    x, loss, converged, _ = results[best]
    trace = [row for res in results for row in res[3]]
    return OptimizationResult(
        nearest_unitary(_gauged_matrix(x[:3])),
        nearest_unitary(_gauged_matrix(x[3:])),
        obj.report(loss),
        objective.variant,
        seed,
        restarts,
        "converged" if converged else "max_iters",
        best,
        trace,
    )


def evaluate_receiver(
    ensemble: Ensemble, receiver: tuple[Unitary2, Unitary2], objective: ObjectiveSpec | None = None
) -> float:
    """Objective value of a fixed receiver, in the variant's natural sign."""
    obj = _Objective(ensemble, objective or ObjectiveSpec())
    return obj.report(obj.loss(np.concatenate([_gauge_params(receiver[0]), _gauge_params(receiver[1])])))


def _gauge_params(u: Unitary2) -> np.ndarray:
    p = UnitaryParams.from_unitary(u)
    return np.array([p.theta, p.phi1, p.phi2])


def induced_map_rule_error(ensemble: Ensemble, receiver, objective: ObjectiveSpec) -> float:
    """MAP error of the table restricted to the objective's window of retained bins."""
    n_bins = objective.window + (1 if objective.schedule.first_step_discarded else 0)
    spec = ObjectiveSpec(
        "map_error", objective.window, objective.sink, objective.schedule, n_bins, objective.priors
    )
    obj = _Objective(ensemble, spec)
    return obj.error(receiver[0].matrix, receiver[1].matrix)


__all__ = [
    "UnitaryParams",
    "ObjectiveSpec",
    "OptimizationResult",
    "binary_optimal",
    "gu_receiver",
    "tetrad_receiver",
    "receiver_config",
    "optimize",
    "evaluate_receiver",
    "induced_map_rule_error",
]
