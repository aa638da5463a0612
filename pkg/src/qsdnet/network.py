"""Discrete-time evolution of the looped 2-2-2 sink network.

A photon enters the input layer, is carried to the sinker layer by the
forward block ``U_F``, meets the extraction element (leaves to the sinks
with probability ``p`` or stays with ``1 - p``), and, if it stays, returns to
the input layer through the backward block ``U_B`` before the next forward
pass. Extracted population is measured classically per (sink, time bin);
different bins never interfere, so one network 2-vector plus a table of
real bin probabilities describes the full state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Ensemble, PureState, Unitary2
from .errors import ArityError, DegenerateInputError, ValidationError

SINKS = (5, 6)


@dataclass(frozen=True)
class ExtractionSchedule:
    """Extraction probability at each encounter with the splitter.

    ``first_step_override`` replaces the probability at the first encounter
    (unbalanced splitter seen from the other port). ``first_step_discarded``
    drops bin 1 from every normalized table.
    """

    default_extraction_prob: float = 0.3
    first_step_override: Optional[float] = None
    first_step_discarded: bool = False

    def __post_init__(self):
        for p in (self.default_extraction_prob, self.first_step_override):
            if p is not None and not (0.0 < p <= 1.0):
                raise ValidationError(f"extraction probabilities must lie in (0, 1], got {p}")

    @classmethod
    def experimental(cls) -> "ExtractionSchedule":
        """Unbalanced splitter: 0.7 out on the first pass, 0.3 afterwards, bin 1 dropped."""
        return cls(0.3, 0.7, True)

    def extraction_probs(self, n: int) -> np.ndarray:
        p = np.full(n, self.default_extraction_prob, dtype=float)
        if self.first_step_override is not None and n > 0:
            p[0] = self.first_step_override
        return p

    def envelope(self, n: int) -> np.ndarray:
        """Total extraction probability at bins ``1..n``: ``prod_{j<k} T_j * (1 - T_k)``."""
        p = self.extraction_probs(n)
        stay = np.concatenate(([1.0], np.cumprod(1.0 - p)[:-1]))
        return stay * p

    def to_dict(self) -> dict:
        return {
            "default_extraction_prob": self.default_extraction_prob,
            "first_step_override": self.first_step_override,
            "first_step_discarded": self.first_step_discarded,
        }


@dataclass(frozen=True)
class NetworkConfig:
    u_forward: Unitary2
    u_backward: Unitary2
    schedule: ExtractionSchedule = field(default_factory=ExtractionSchedule)
    max_loops: int = 12

    def __post_init__(self):
        if int(self.max_loops) != self.max_loops or self.max_loops < 1:
            raise ValidationError(f"max_loops must be a positive integer, got {self.max_loops}")

    def to_dict(self) -> dict:
        return {
            "u_forward": self.u_forward.to_dict(),
            "u_backward": self.u_backward.to_dict(),
            "schedule": self.schedule.to_dict(),
            "max_loops": self.max_loops,
        }


@dataclass(frozen=True)
class TimeBinnedDistribution:
    """Sink probabilities per extraction step plus the population left in the network.

    ``bins[k - 1]`` is ``(P_5(t_k), P_6(t_k))``. All ``max_loops`` bins are kept
    here even when the schedule discards bin 1; discarding happens when the
    distribution is normalized.
    """

    bins: np.ndarray
    residual: float
    first_step_discarded: bool = False

    def __post_init__(self):
        b = np.asarray(self.bins, dtype=float).reshape(-1, 2)
        b.setflags(write=False)
        object.__setattr__(self, "bins", b)
        object.__setattr__(self, "residual", float(self.residual))

    @property
    def n_bins(self) -> int:
        return self.bins.shape[0]

    @property
    def total(self) -> float:
        return float(self.bins.sum() + self.residual)

    def retained(self) -> tuple[np.ndarray, np.ndarray]:
        """``(bin_indices, bins)`` after dropping bin 1 if configured."""
        start = 1 if self.first_step_discarded else 0
        return np.arange(start + 1, self.n_bins + 1), self.bins[start:]

    def to_dict(self) -> dict:
        return {"bins": self.bins.tolist(), "residual": self.residual}


@dataclass(frozen=True)
class SinkTable:
    """Normalized (bin, sink) table derived from a :class:`TimeBinnedDistribution`."""

    bin_indices: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.bin_indices, dtype=int)
        p = np.asarray(self.probs, dtype=float).reshape(-1, 2)
        if idx.shape[0] != p.shape[0]:
            raise ValidationError("bin_indices and probs disagree in length")
        idx.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "bin_indices", idx)
        object.__setattr__(self, "probs", p)

    def flat(self) -> np.ndarray:
        """Probabilities in outcome order ``(bin, sink5), (bin, sink6), ...``."""
        return self.probs.reshape(-1)

    def outcomes(self) -> list[tuple[int, int]]:
        return [(sink, int(k)) for k in self.bin_indices for sink in SINKS]


def _sinker_populations(uf: np.ndarray, ub: np.ndarray, vectors: np.ndarray, n_bins: int) -> np.ndarray:
    """``|<sigma|state after k-th forward pass>|^2`` for a batch of inputs.

    ``vectors`` has shape ``(n, 2)``; the result has shape ``(n, n_bins, 2)``.
    """
    v = uf @ vectors.T
    out = np.empty((vectors.shape[0], n_bins, 2))
    for k in range(n_bins):
        out[:, k, :] = (v.real ** 2 + v.imag ** 2).T
        v = uf @ (ub @ v)
    return out


def evolve(config: NetworkConfig, state: PureState) -> TimeBinnedDistribution:
    """Run ``max_loops`` extraction steps and return the time-binned sink distribution."""
    p = config.schedule.extraction_probs(config.max_loops)
    uf, ub = config.u_forward.matrix, config.u_backward.matrix
    v = uf @ state.vector
    survive = 1.0
    bins = np.empty((config.max_loops, 2))
    for k in range(config.max_loops):
        bins[k] = survive * p[k] * np.abs(v) ** 2
        survive *= 1.0 - p[k]
        v = uf @ (ub @ v)
    return TimeBinnedDistribution(bins, survive, config.schedule.first_step_discarded)


def conditional_distribution(d: TimeBinnedDistribution) -> SinkTable:
    """Renormalize the retained bins so all (sink, bin) entries sum to 1."""
    idx, bins = d.retained()
    total = bins.sum()
    if not total > 0:
        raise DegenerateInputError("no extracted probability in the retained bins")
    return SinkTable(idx, bins / total)


def decay_free_distribution(d: TimeBinnedDistribution, schedule: ExtractionSchedule) -> SinkTable:
    """Per-bin sink populations with the geometric extraction envelope divided out.

    Bins the schedule can never reach (zero envelope) are dropped.
    """
    env = schedule.envelope(d.n_bins)
    start = 1 if d.first_step_discarded else 0
    keep = np.nonzero(env[start:] > 0)[0] + start
    if keep.size == 0:
        raise DegenerateInputError("no reachable bins to normalize")
    scaled = d.bins[keep] / env[keep, None]
    per_bin = scaled.sum(axis=1, keepdims=True)
    if np.any(per_bin <= 0):
        raise DegenerateInputError("a reachable bin carries no probability")
    return SinkTable(keep + 1, scaled / per_bin)


def loop_operator(config: NetworkConfig) -> Unitary2:
    """``U_F @ U_B``: the sinker-to-sinker map between two extraction steps."""
    return config.u_forward @ config.u_backward


def cumulative_correct(
    config: NetworkConfig, ensemble: Ensemble, sink_map: Sequence[int] = (5, 6)
) -> list[float]:
    """Normalized cumulative probability of a correct guess after each retained bin.

    ``sink_map[i]`` is the sink (5 or 6) whose clicks are read as state ``i``.
    """
    if len(ensemble) != 2:
        raise ArityError(f"cumulative_correct needs exactly 2 states, got {len(ensemble)}")
    if sorted(sink_map) != [5, 6]:
        raise ValidationError(f"sink_map must assign sinks 5 and 6 once each, got {sink_map}")
    correct = 0.0
    total = 0.0
    out = []
    per_state = [evolve(config, s).retained()[1] for s in ensemble.states]
    for k in range(per_state[0].shape[0]):
        for i, (prior, bins) in enumerate(zip(ensemble.priors, per_state)):
            correct += prior * bins[k, SINKS.index(sink_map[i])]
            total += prior * bins[k].sum()
        out.append(float(correct / total) if total > 0 else math.nan)
    return out
