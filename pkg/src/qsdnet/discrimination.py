"""MAP decisions over (sink, bin) outcomes and multi-copy Bayesian error."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .core import Ensemble
from .errors import CapacityError, ContradictoryEvidenceError, ShapeError, ValidationError
from .network import NetworkConfig, conditional_distribution, evolve

TIE_RTOL = 1e-12
MC_CHUNK = 8192


@dataclass(frozen=True)
class OutcomeTable:
    """Row ``j`` is ``P(outcome | state j)`` over a shared list of (sink, bin) outcomes."""

    probs: np.ndarray
    outcomes: tuple[tuple[int, int], ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        p = np.array(self.probs, dtype=float, ndmin=2)
        if p.shape[1] != len(self.outcomes):
            raise ShapeError(f"{p.shape[1]} columns but {len(self.outcomes)} outcomes")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValidationError("outcome probabilities must be finite and non-negative")
        sums = p.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-10):
            raise ValidationError(f"rows must sum to 1, got {sums}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "outcomes", tuple(tuple(o) for o in self.outcomes))
        labels = tuple(self.labels) or tuple(f"psi{i + 1}" for i in range(p.shape[0]))
        object.__setattr__(self, "labels", labels)

    @property
    def n_hypotheses(self) -> int:
        return self.probs.shape[0]

    @property
    def n_outcomes(self) -> int:
        return self.probs.shape[1]

    def reduced(self) -> "OutcomeTable":
        """Equivalent table for count statistics.

        Outcomes impossible under every hypothesis are dropped and outcomes whose
        likelihood columns are proportional are merged. Both leave the posterior
        and the Bayes error of any number of i.i.d. copies unchanged.
        """
        p = self.probs
        keep = np.nonzero(p.sum(axis=0) > 0)[0]
        groups: list[list[int]] = []
        dirs: list[np.ndarray] = []
        for o in keep:
            col = p[:, o] / np.linalg.norm(p[:, o])
            for g, d in zip(groups, dirs):
                if np.abs(col - d).max() <= 1e-12:
                    g.append(int(o))
                    break
            else:
                groups.append([int(o)])
                dirs.append(col)
        merged = np.stack([p[:, g].sum(axis=1) for g in groups], axis=1)
        merged /= merged.sum(axis=1, keepdims=True)
        return OutcomeTable(merged, tuple(self.outcomes[g[0]] for g in groups), self.labels)


def outcome_table(config: NetworkConfig, ensemble: Ensemble) -> OutcomeTable:
    """Conditional (sink, bin) distribution of every state in the ensemble."""
    tables = [conditional_distribution(evolve(config, s)) for s in ensemble.states]
    return OutcomeTable(np.stack([t.flat() for t in tables]), tuple(tables[0].outcomes()), ensemble.labels)


@dataclass(frozen=True)
class DecisionRule:
    """``assignment[o]`` is the hypothesis guessed on outcome ``o``."""

    assignment: tuple[int, ...]
    outcomes: tuple[tuple[int, int], ...]
    tie_break: str = "lowest"

    def __call__(self, outcome: tuple[int, int]) -> int:
        return self.assignment[self.outcomes.index(tuple(outcome))]


@dataclass(frozen=True)
class CountVector:
    """Integer count per outcome, aligned with an :class:`OutcomeTable`."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1 or np.any(c < 0) or np.any(c != np.round(c)):
            raise ValidationError("counts must be a 1-D array of non-negative integers")
        c = c.astype(np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def total_copies(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_outcomes(cls, table: OutcomeTable, observed: dict) -> "CountVector":
        c = np.zeros(table.n_outcomes, dtype=np.int64)
        for o, n in observed.items():
            c[table.outcomes.index(tuple(o))] = n
        return cls(c)


def _priors(priors, n: int) -> np.ndarray:
    p = np.asarray(priors, dtype=float)
    if p.shape != (n,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValidationError(f"priors must be {n} non-negative numbers summing to 1, got {priors}")
    return p


def _argmax_lowest(w: np.ndarray, axis: int = 0) -> np.ndarray:
    """Argmax with near-ties (relative ``TIE_RTOL``) resolved to the lowest index."""
    top = w.max(axis=axis, keepdims=True)
    close = w >= top - TIE_RTOL * np.abs(top)
    return np.argmax(close, axis=axis)


def build_map_rule(table: OutcomeTable, priors: Sequence[float]) -> DecisionRule:
    pri = _priors(priors, table.n_hypotheses)
    weighted = pri[:, None] * table.probs
    return DecisionRule(tuple(int(j) for j in _argmax_lowest(weighted, axis=0)), table.outcomes)


def single_copy_error(rule: DecisionRule, table: OutcomeTable, priors: Sequence[float]) -> float:
    """``1 - sum_o prior[r(o)] P(o | r(o))`` for a deterministic rule ``r``."""
    pri = _priors(priors, table.n_hypotheses)
    if rule.outcomes != table.outcomes:
        raise ShapeError("rule and table are defined over different outcomes")
    a = np.asarray(rule.assignment)
    cols = np.arange(table.n_outcomes)
    return float(1.0 - np.sum(pri[a] * table.probs[a, cols]))


def map_error(table: OutcomeTable, priors: Sequence[float]) -> float:
    """Single-copy error of the MAP rule (the minimum over deterministic rules)."""
    return single_copy_error(build_map_rule(table, priors), table, priors)


def _log_likelihoods(counts: np.ndarray, probs: np.ndarray, floor: Optional[float]) -> np.ndarray:
    """``sum_o n_o log P(o|j)`` for counts of shape ``(..., O)``; returns ``(..., H)``.

    Zero probabilities contribute ``-inf`` only where the count is positive.
    """
    p = probs if floor is None else np.maximum(probs, floor)
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    finite = np.where(np.isfinite(logp), logp, 0.0)
    ll = counts @ finite.T
    impossible = (counts > 0).astype(float) @ (~np.isfinite(logp)).astype(float).T
    return np.where(impossible > 0, -np.inf, ll)


def multi_copy_posterior(
    counts: CountVector, table: OutcomeTable, priors: Sequence[float], floor: Optional[float] = None
) -> np.ndarray:
    """Posterior over hypotheses after i.i.d. copies with the given outcome counts."""
    pri = _priors(priors, table.n_hypotheses)
    if counts.counts.shape[0] != table.n_outcomes:
        raise ShapeError(f"{counts.counts.shape[0]} counts for {table.n_outcomes} outcomes")
    with np.errstate(divide="ignore"):
        logpost = np.log(pri) + _log_likelihoods(counts.counts.astype(float), table.probs, floor)
    if not np.any(np.isfinite(logpost)):
        raise ContradictoryEvidenceError("every hypothesis gives the observed counts zero likelihood")
    return np.exp(logpost - logsumexp(logpost))


def n_compositions(m: int, d: int) -> int:
    return math.comb(m + d - 1, d - 1)


def compositions(m: int, d: int) -> np.ndarray:
    """All length-``d`` non-negative integer vectors summing to ``m`` (stars and bars)."""
    if d == 1:
        return np.array([[m]], dtype=np.int64)
    bars = np.array(list(itertools.combinations(range(m + d - 1), d - 1)), dtype=np.int64).reshape(-1, d - 1)
    edges = np.concatenate(
        [np.full((bars.shape[0], 1), -1), bars, np.full((bars.shape[0], 1), m + d - 1)], axis=1
    )
    return np.diff(edges, axis=1) - 1


@dataclass(frozen=True)
class ErrorEstimate:
    value: float
    stderr: float
    mode: str
    m: int
    trials: int = 0
    floor: Optional[float] = None


def expected_multi_copy_error(
    table: OutcomeTable,
    priors: Sequence[float],
    m: int,
    mode: str = "exact",
    seed: int = 0,
    trials: int = 100_000,
    floor: Optional[float] = None,
    max_compositions: int = 2_000_000,
    threads: int = 1,
) -> ErrorEstimate:
    """Bayes (MAP) error after ``m`` i.i.d. copies.

    ``exact`` enumerates every count composition of the reduced table.
    ``montecarlo`` averages ``1 - max posterior`` over sampled count vectors;
    chunk ``c`` of trials draws from ``SeedSequence(seed, spawn_key=(c,))``, so
    the estimate does not depend on ``threads``. ``floor`` (Monte Carlo only)
    lower-bounds likelihoods to keep contradictory samples finite.
    """
    if m < 1:
        raise ValidationError(f"m must be >= 1, got {m}")
    pri = _priors(priors, table.n_hypotheses)
    if mode == "exact":
        if floor is not None:
            raise ValidationError("the likelihood floor is only available in montecarlo mode")
        red = table.reduced()
        size = n_compositions(m, red.n_outcomes)
        if size > max_compositions:
            raise CapacityError(
                f"exact enumeration needs {size} count vectors (> {max_compositions}); use mode='montecarlo'"
            )
        n = compositions(m, red.n_outcomes)
        logcoef = gammaln(m + 1) - gammaln(n + 1).sum(axis=1)
        with np.errstate(divide="ignore"):
            logjoint = np.log(pri) + logcoef[:, None] + _log_likelihoods(n.astype(float), red.probs, None)
        correct = np.exp(logjoint.max(axis=1)).sum()
        return ErrorEstimate(float(max(0.0, 1.0 - correct)), 0.0, "exact", m)
    if mode != "montecarlo":
        raise ValidationError(f"mode must be 'exact' or 'montecarlo', got {mode!r}")
    if trials < 2:
        raise ValidationError("montecarlo mode needs at least 2 trials")
    sizes = [MC_CHUNK] * (trials // MC_CHUNK) + ([trials % MC_CHUNK] if trials % MC_CHUNK else [])
    logpri = np.log(np.where(pri > 0, pri, 1.0))
    logpri[pri == 0] = -np.inf

    def chunk(c: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(c,)))
        h = rng.choice(table.n_hypotheses, size=sizes[c], p=pri)
        counts = rng.multinomial(m, table.probs[h]).astype(float)
        logpost = logpri + _log_likelihoods(counts, table.probs, floor)
        if not np.all(np.isfinite(logpost.max(axis=1))):
            raise ContradictoryEvidenceError("sampled counts with zero likelihood under every hypothesis")
        return 1.0 - np.exp(logpost.max(axis=1) - logsumexp(logpost, axis=1))

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(chunk, range(len(sizes))))
    else:
        parts = [chunk(c) for c in range(len(sizes))]
    x = np.concatenate(parts)
    return ErrorEstimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), "montecarlo", m, trials, floor)


def log_error_slope(ms: Sequence[int], errors: Sequence[float], stderrs: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of ``log(error)`` against ``m`` and its propagated standard error.

    Exact points carry zero variance; each point's log variance is
    ``(stderr / error)^2``.
    """
    ms = np.asarray(ms, dtype=float)
    e = np.asarray(errors, dtype=float)
    s = np.asarray(stderrs, dtype=float)
    if np.any(e <= 0):
        raise ValidationError("log slope needs strictly positive errors")
    c = (ms - ms.mean()) / np.sum((ms - ms.mean()) ** 2)
    slope = float(np.sum(c * np.log(e)))
    return slope, float(math.sqrt(np.sum(c ** 2 * (s / e) ** 2)))
