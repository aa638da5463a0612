"""Monte Carlo model of the time-binned coincidence-counting experiment.

A run draws a number of detected pairs from the source statistics, places
each pair in a (sink, bin) cell according to the network's conditional
distribution, and adds accidental coincidences per cell. The analysis side
estimates the accidental background from signal-free runs, post-selects runs
whose total count is compatible with a target photon number, averages them,
subtracts the background and scores the Bayesian posterior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import Ensemble, PureState
from .discrimination import CountVector, OutcomeTable, multi_copy_posterior, outcome_table
from .errors import ArityError, NoEventsInWindowError, ShapeError, ValidationError
from .network import NetworkConfig, conditional_distribution, evolve


@dataclass(frozen=True)
class NoiseModel:
    """Source and background rates, all per second.

    ``generation`` is ``"poisson"`` or ``"thermal"``; thermal totals are
    negative binomial with variance ``mean + (g2 - 1) mean^2``.
    """

    pair_rate: float = 1.5
    accidental_rate_per_bin: float = 0.0
    generation: str = "poisson"
    g2: float = 2.0

    def __post_init__(self):
        if self.pair_rate < 0 or self.accidental_rate_per_bin < 0:
            raise ValidationError("rates must be non-negative")
        if self.generation not in ("poisson", "thermal"):
            raise ValidationError(f"generation must be 'poisson' or 'thermal', got {self.generation!r}")
        if self.generation == "thermal" and self.g2 < 1:
            raise ValidationError(f"thermal g2 must be >= 1, got {self.g2}")

    def to_dict(self) -> dict:
        return {
            "pair_rate": self.pair_rate,
            "accidental_rate_per_bin": self.accidental_rate_per_bin,
            "generation": self.generation,
            "g2": self.g2,
        }


@dataclass(frozen=True)
class EventRecord:
    """Counts per (bin, sink) cell from one run, or an average of runs.

    ``counts`` has shape ``(n_bins, 2)``; columns are sinks 5 and 6.
    ``raw`` is False once background has been subtracted. Averaged records
    hold real-valued counts.
    """

    counts: np.ndarray
    bin_indices: np.ndarray
    duration: float
    raw: bool = True
    averaged: bool = False
    seed: Optional[int] = None
    state_label: Optional[str] = None
    clamped: int = 0

    def __post_init__(self):
        c = np.array(self.counts, dtype=float).reshape(-1, 2)
        idx = np.asarray(self.bin_indices, dtype=int)
        if idx.shape[0] != c.shape[0]:
            raise ShapeError("bin_indices and counts disagree in length")
        if np.any(c < 0):
            raise ValidationError("counts must be non-negative")
        if self.raw and not self.averaged and np.any(c != np.round(c)):
            raise ValidationError("raw single-run counts must be integers")
        if not self.duration > 0:
            raise ValidationError("duration must be positive")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "bin_indices", idx)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def outcomes(self) -> list[tuple[int, int]]:
        return [(sink, int(k)) for k in self.bin_indices for sink in (5, 6)]


def _draw_total(rng: np.random.Generator, noise: NoiseModel, duration: float) -> int:
    mean = noise.pair_rate * duration
    if mean == 0:
        return 0
    if noise.generation == "thermal" and noise.g2 > 1:
        r = 1.0 / (noise.g2 - 1.0)
        return int(rng.negative_binomial(r, r / (r + mean)))
    return int(rng.poisson(mean))


def simulate_run(
    config: NetworkConfig,
    state: PureState,
    noise: NoiseModel,
    duration: float,
    seed: int,
    state_label: Optional[str] = None,
    table=None,
) -> EventRecord:
    """One ``duration``-second run. ``table`` may pass a precomputed conditional distribution."""
    if not duration > 0:
        raise ValidationError("duration must be positive")
    table = table if table is not None else conditional_distribution(evolve(config, state))
    rng = np.random.default_rng(seed)
    n = _draw_total(rng, noise, duration)
    p = table.flat()
    counts = rng.multinomial(n, p / p.sum())
    if noise.accidental_rate_per_bin > 0:
        counts = counts + rng.poisson(noise.accidental_rate_per_bin * duration, size=counts.shape)
    return EventRecord(counts.reshape(-1, 2), table.bin_indices, duration, seed=seed, state_label=state_label)


@dataclass(frozen=True)
class BackgroundEstimate:
    """Per-cell accidental rates (1/s) with standard errors.

    ``upper_95`` is a one-sided 95% upper limit per cell, ``-ln(0.05) / T``
    for cells with no counts and ``rate + 1.645 stderr`` otherwise.
    """

    rates: np.ndarray
    stderr: np.ndarray
    upper_95: np.ndarray
    bin_indices: np.ndarray
    duration: float


def estimate_background(records: Sequence[EventRecord]) -> BackgroundEstimate:
    if not records:
        raise ArityError("need at least one noise-only record")
    shape = records[0].counts.shape
    for r in records:
        if r.counts.shape != shape or not np.array_equal(r.bin_indices, records[0].bin_indices):
            raise ShapeError("noise records have different cell structures")
    total_t = sum(r.duration for r in records)
    counts = np.sum([r.counts for r in records], axis=0)
    rates = counts / total_t
    stderr = np.sqrt(counts) / total_t
    upper = np.where(counts > 0, rates + 1.645 * stderr, -math.log(0.05) / total_t)
    return BackgroundEstimate(rates, stderr, upper, records[0].bin_indices, total_t)


def subtract_background(record: EventRecord, background: BackgroundEstimate) -> EventRecord:
    """Remove ``rate * duration`` per cell, clamping at zero; ``clamped`` counts clamped cells."""
    if not record.raw:
        raise ValidationError("record has already been background-subtracted")
    if record.counts.shape != background.rates.shape or not np.array_equal(
        record.bin_indices, background.bin_indices
    ):
        raise ShapeError(f"record cells {record.counts.shape} do not match background {background.rates.shape}")
    diff = record.counts - background.rates * record.duration
    return replace(record, counts=np.maximum(diff, 0.0), raw=False, clamped=int(np.sum(diff < 0)))


@dataclass(frozen=True)
class PostSelection:
    record: EventRecord
    kept: int
    discarded: int


def _in_window(records: Sequence[EventRecord], k: float, window_sigmas: float) -> list[EventRecord]:
    half = window_sigmas * math.sqrt(k)
    return [r for r in records if abs(r.total - k) <= half + 1e-9]


def postselect_k_photon(records: Sequence[EventRecord], k: float, window_sigmas: float = 2.0) -> PostSelection:
    """Average the records whose total lies within ``k +- window_sigmas * sqrt(k)``."""
    if not records:
        raise ArityError("no records to post-select")
    first = records[0]
    for r in records:
        if r.duration != first.duration or r.counts.shape != first.counts.shape:
            raise ShapeError("records must share duration and cell structure")
    kept = _in_window(records, k, window_sigmas)
    if not kept:
        raise NoEventsInWindowError(f"no record has a total within {k} +- {window_sigmas * math.sqrt(k):.3g}")
    mean = np.mean([r.counts for r in kept], axis=0)
    avg = EventRecord(
        mean,
        first.bin_indices,
        first.duration,
        raw=first.raw,
        averaged=True,
        state_label=first.state_label,
        clamped=sum(r.clamped for r in kept),
    )
    return PostSelection(avg, len(kept), len(records) - len(kept))


def round_to_total(values: np.ndarray, m: Optional[int] = None) -> np.ndarray:
    """Largest-remainder rounding of non-negative reals to integers summing to ``m``.

    ``m`` defaults to the rounded sum of ``values``.
    """
    v = np.asarray(values, dtype=float).reshape(-1)
    m = int(round(v.sum())) if m is None else int(m)
    if v.sum() <= 0:
        return np.zeros(v.shape, dtype=np.int64)
    scaled = v * (m / v.sum())
    base = np.floor(scaled).astype(np.int64)
    rem = m - int(base.sum())
    # stable sort keeps ties at the lowest index
    order = np.argsort(-(scaled - base), kind="stable")
    base[order[:rem]] += 1
    return base


def total_variation(counts: np.ndarray, probs: np.ndarray) -> float:
    c = np.asarray(counts, dtype=float).reshape(-1)
    p = np.asarray(probs, dtype=float).reshape(-1)
    return float(0.5 * np.abs(c / c.sum() - p).sum())


@dataclass(frozen=True)
class CurvePoint:
    k: int
    m_mean: float
    p_err: float
    stderr: float
    kept: int
    discarded: int
    per_state: tuple[float, ...] = field(default=())


def derive_seed(master: int, *key: int) -> int:
    """64-bit seed for the stream identified by ``key`` under ``master``."""
    return int(np.random.SeedSequence(master, spawn_key=tuple(key)).generate_state(1, np.uint64)[0])


def end_to_end_error_curve(
    config: NetworkConfig,
    ensemble: Ensemble,
    noise: NoiseModel,
    k_values: Sequence[int],
    runs_per_k: int = 30,
    seed: int = 0,
    window_sigmas: float = 2.0,
    mode: str = "averaged",
    background_runs: int = 30,
    bootstrap: int = 64,
    floor: Optional[float] = None,
) -> list[CurvePoint]:
    """Error probability against photon number through the full counting pipeline.

    For each ``k`` and each state, runs of ``k / pair_rate`` seconds are
    simulated, post-selected around their expected total, averaged and
    cleaned with a background measured on signal-free runs.

    ``mode="averaged"`` follows the averaged-event analysis: the cleaned
    average is rounded to a count vector and scored with
    ``1 - P(true state | counts)``; ``stderr`` comes from bootstrap resampling
    of the kept runs. ``mode="per_event"`` cleans, rounds and scores every
    kept run on its own with the MAP error ``1 - max posterior``, which
    estimates the exact multi-copy Bayes error; ``stderr`` is the standard
    error over runs. Runs are seeded from ``SeedSequence(seed, (state, k, run))``.

    Leftover background can land in cells some hypotheses forbid; pass a
    likelihood ``floor`` (e.g. 1e-12) when every hypothesis may be ruled out.
    """
    if mode not in ("averaged", "per_event"):
        raise ValidationError(f"mode must be 'averaged' or 'per_event', got {mode!r}")
    if noise.pair_rate <= 0:
        raise ValidationError("end-to-end curve needs a positive pair_rate")
    if runs_per_k < 1:
        raise ValidationError("runs_per_k must be >= 1")
    table: OutcomeTable = outcome_table(config, ensemble)
    cond = [conditional_distribution(evolve(config, s)) for s in ensemble.states]
    priors = np.asarray(ensemble.priors)
    n_cells = table.n_outcomes
    points = []
    for k in k_values:
        duration = k / noise.pair_rate
        bkg_expected = noise.accidental_rate_per_bin * duration * n_cells
        background = None
        if noise.accidental_rate_per_bin > 0:
            quiet = replace(noise, pair_rate=0.0)
            noise_runs = [
                simulate_run(config, ensemble.states[0], quiet, duration, derive_seed(seed, 1_000_000, k, r), table=cond[0])
                for r in range(background_runs)
            ]
            background = estimate_background(noise_runs)
        per_state, var_state, m_state = [], [], []
        kept_total = discarded_total = 0
        for i, state in enumerate(ensemble.states):
            runs = [
                simulate_run(config, state, noise, duration, derive_seed(seed, i, k, r), ensemble.labels[i], table=cond[i])
                for r in range(runs_per_k)
            ]
            center = k + bkg_expected
            kept = _in_window(runs, center, window_sigmas)
            kept_total += len(kept)
            discarded_total += len(runs) - len(kept)
            if not kept:
                raise NoEventsInWindowError(f"no run for state {ensemble.labels[i]} has a total near {center:.3g}")
            if mode == "averaged":

                def score(recs):
                    avg = postselect_k_photon(recs, center, window_sigmas).record
                    clean = subtract_background(avg, background) if background is not None else avg
                    counts = CountVector(round_to_total(clean.counts))
                    return 1.0 - multi_copy_posterior(counts, table, priors, floor)[i], clean.total

                value, m_clean = score(kept)
                boot_rng = np.random.default_rng(derive_seed(seed, 2_000_000 + i, k))
                boots = [score([kept[j] for j in boot_rng.integers(0, len(kept), len(kept))])[0] for _ in range(bootstrap)]
                per_state.append(value)
                var_state.append(float(np.var(boots, ddof=1)) if bootstrap > 1 else 0.0)
                m_state.append(m_clean)
            else:
                vals, ms = [], []
                for r in kept:
                    clean = subtract_background(r, background) if background is not None else r
                    counts = CountVector(round_to_total(clean.counts))
                    post = multi_copy_posterior(counts, table, priors, floor)
                    vals.append(1.0 - post.max())
                    ms.append(counts.total_copies)
                vals = np.asarray(vals)
                per_state.append(float(vals.mean()))
                var_state.append(float(vals.var(ddof=1) / vals.size) if vals.size > 1 else 0.0)
                m_state.append(float(np.mean(ms)))
        p_err = float(np.dot(priors, per_state))
        stderr = float(math.sqrt(np.dot(priors ** 2, var_state)))
        points.append(
            CurvePoint(int(k), float(np.dot(priors, m_state)), p_err, stderr, kept_total, discarded_total, tuple(per_state))
        )
    return points
