# baseline/services.py
import logging
import time
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

import numpy as np
from django.conf import settings

from episodes.services import Episode, EpisodeError
from spikes.services import Event, EventSequence, split_trials

logger = logging.getLogger(__name__)


class SurrogateConfigError(ValueError):
    pass


class PatternExplosionError(ValueError):
    pass


class SurrogateRules:
    # jitter window as a multiple of the expiry when none is given
    JITTER_PER_EXPIRY = 2
    MIN_PATTERN_SIZE = 2


@dataclass(frozen=True)
class SurrogateConfig:
    n_surrogates: int = 25
    jitter_window: Optional[int] = None
    n_trials: int = 20
    alpha: float = 0.05
    seed: Optional[int] = None

    def __post_init__(self):
        if self.n_surrogates < 1:
            raise SurrogateConfigError(f"n_surrogates must be at least 1, got {self.n_surrogates}")
        if self.jitter_window is not None and self.jitter_window < 0:
            raise SurrogateConfigError(f"jitter window must be >= 0, got {self.jitter_window}")
        if self.n_trials < 1:
            raise SurrogateConfigError(f"n_trials must be at least 1, got {self.n_trials}")
        if not 0 < self.alpha < 1:
            raise SurrogateConfigError(f"alpha must lie in (0, 1), got {self.alpha}")

    @classmethod
    def from_settings(cls, **overrides) -> 'SurrogateConfig':
        defaults = settings.SYNCHRONY
        values = dict(
            n_surrogates=defaults['SURROGATES'],
            n_trials=defaults['TRIALS'],
            alpha=defaults['ALPHA'],
        )
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)

    def window_for(self, expiry: int) -> int:
        return self.jitter_window if self.jitter_window is not None else SurrogateRules.JITTER_PER_EXPIRY * expiry


def count_all_occurrences(seq: EventSequence, pattern: Episode, T: int) -> int:
    """
    Number of tuples, one event per constituent type, whose tick span is at most T.

    Every tuple is counted once, at its first event in (tick, type) order: for an event of
    type i at tick t, type j contributes its events in (t, t+T], plus those at t when j > i.
    """
    if T < 0:
        raise EpisodeError(f"expiry must be >= 0, got {T}")
    if pattern.types[-1] >= seq.num_types:
        return 0
    by_type = [seq.ticks_by_type[t] for t in pattern.types]
    if any(len(ticks) == 0 for ticks in by_type):
        return 0

    total = 0
    for i, first in enumerate(by_type):
        ways = np.ones(len(first), dtype=np.int64)
        for j, other in enumerate(by_type):
            if j == i:
                continue
            lo = np.searchsorted(other, first, side='left' if j > i else 'right')
            hi = np.searchsorted(other, first + T, side='right')
            ways *= hi - lo
        total += int(ways.sum())
    return total


def enumerate_patterns(
        seq: EventSequence,
        T: int,
        max_size: Optional[int] = None,
        type_cap: Optional[int] = None,
) -> Set[Episode]:
    """Every episode of at most max_size types with at least one occurrence of span <= T."""
    if max_size is not None and max_size < 1:
        raise EpisodeError(f"max_size must be at least 1, got {max_size}")
    if T < 0:
        raise EpisodeError(f"expiry must be >= 0, got {T}")
    if type_cap is None:
        type_cap = settings.SYNCHRONY['PATTERN_TYPE_CAP']

    ticks, etypes = seq.ticks, seq.etypes
    starts = np.unique(ticks)
    ends = np.searchsorted(ticks, starts + T, side='right')
    begins = np.searchsorted(ticks, starts, side='left')

    windows: Set[FrozenSet[int]] = set()
    for begin, end in zip(begins, ends):
        windows.add(frozenset(etypes[begin:end].tolist()))

    patterns: Set[Episode] = set()
    for present in windows:
        if max_size is None and len(present) > type_cap:
            raise PatternExplosionError(
                f"a window holds {len(present)} distinct types (cap {type_cap}); set max_size"
            )
        types = sorted(present)
        largest = len(types) if max_size is None else min(max_size, len(types))
        for size in range(1, largest + 1):
            patterns.update(Episode(combo) for combo in combinations(types, size))

    logger.info(f"Enumerated {len(patterns)} patterns from {len(windows)} distinct windows (T={T})")
    return patterns


def jitter_surrogate(seq: EventSequence, J: int, seed=None) -> EventSequence:
    """Shift every event by an independent uniform integer offset in [-J, J], clamped to [0, L]."""
    if J < 0:
        raise SurrogateConfigError(f"jitter window must be >= 0, got {J}")
    if J == 0 or not seq.events:
        return EventSequence(seq.events, seq.delta_t, seq.length_ticks, seq.num_types, seq.labels)
    rng = np.random.default_rng(seed)
    shifted = np.clip(seq.ticks + rng.integers(-J, J + 1, size=len(seq)), 0, seq.length_ticks)
    events = [Event(int(tick), int(etype)) for tick, etype in zip(shifted, seq.etypes)]
    return EventSequence.from_events(events, seq.delta_t, seq.length_ticks, seq.num_types, seq.labels)


class SurrogateEnsemble:
    """
    n_surrogates jittered copies of every trial, built once and shared by all tested patterns.
    The copy of trial i for surrogate k is seeded with (seed, i, k).
    """

    def __init__(self, trials: Sequence[EventSequence], jitter_window: int, n_surrogates: int, seed=None):
        if not trials:
            raise SurrogateConfigError("surrogate testing needs at least one trial")
        self.trials = list(trials)
        self.jitter_window = jitter_window
        self.n_surrogates = n_surrogates
        base = seed if seed is not None else int(np.random.SeedSequence().entropy % (2 ** 32))
        self.surrogates: List[List[EventSequence]] = [
            [jitter_surrogate(trial, jitter_window, [base, i, k]) for i, trial in enumerate(self.trials)]
            for k in range(n_surrogates)
        ]
        logger.info(
            f"Built {n_surrogates} surrogates of {len(self.trials)} trials (J={jitter_window} ticks)"
        )

    def observed_mean(self, pattern: Episode, T: int) -> float:
        return float(np.mean([count_all_occurrences(trial, pattern, T) for trial in self.trials]))

    def surrogate_means(self, pattern: Episode, T: int) -> np.ndarray:
        return np.array([
            np.mean([count_all_occurrences(trial, pattern, T) for trial in copies])
            for copies in self.surrogates
        ])


@dataclass(frozen=True)
class PatternResult:
    pattern: Episode
    observed_mean: float
    quantile: float
    significant: bool


def _decide(observed: float, surrogate_means: np.ndarray, alpha: float) -> Tuple[float, bool]:
    # a flat surrogate distribution reduces to observed > that value
    quantile = float(np.quantile(surrogate_means, 1 - alpha))
    return quantile, observed > quantile


def surrogate_significance(
        trials: Sequence[EventSequence],
        pattern: Episode,
        T: int,
        cfg: SurrogateConfig,
) -> Tuple[float, np.ndarray, bool]:
    """Observed trial-mean all-occurrence count against the (1 - alpha) quantile of its jittered copies."""
    ensemble = SurrogateEnsemble(trials, cfg.window_for(T), cfg.n_surrogates, cfg.seed)
    observed = ensemble.observed_mean(pattern, T)
    means = ensemble.surrogate_means(pattern, T)
    _, significant = _decide(observed, means, cfg.alpha)
    return observed, means, significant


@dataclass
class BaselineReport:
    results: List[PatternResult] = field(default_factory=list)
    runtime_s: float = 0.0

    def significant(self) -> List[PatternResult]:
        return [result for result in self.results if result.significant]

    def episodes(self) -> Set[Episode]:
        return {result.pattern for result in self.significant()}


def run_baseline(
        seq: EventSequence,
        T: int,
        cfg: SurrogateConfig,
        max_size: Optional[int] = None,
        type_cap: Optional[int] = None,
) -> BaselineReport:
    """
    Split into trials, test every pattern of two or more types that occurs at least once
    against one shared surrogate ensemble, and report them all with their verdicts.
    """
    started = time.perf_counter()
    trials = split_trials(seq, cfg.n_trials)
    patterns = sorted(
        p for p in enumerate_patterns(seq, T, max_size, type_cap) if p.n >= SurrogateRules.MIN_PATTERN_SIZE
    )
    report = BaselineReport()
    if not patterns:
        report.runtime_s = time.perf_counter() - started
        return report

    ensemble = SurrogateEnsemble(trials, cfg.window_for(T), cfg.n_surrogates, cfg.seed)
    for pattern in patterns:
        observed = ensemble.observed_mean(pattern, T)
        quantile, significant = _decide(observed, ensemble.surrogate_means(pattern, T), cfg.alpha)
        report.results.append(PatternResult(pattern, observed, quantile, significant))

    report.runtime_s = time.perf_counter() - started
    logger.info(
        f"Baseline tested {len(patterns)} patterns, {len(report.significant())} significant "
        f"in {report.runtime_s:.2f}s"
    )
    return report


def significant_by_size(report: BaselineReport) -> Dict[int, int]:
    sizes: Dict[int, int] = {}
    for result in report.significant():
        sizes[result.pattern.n] = sizes.get(result.pattern.n, 0) + 1
    return dict(sorted(sizes.items()))
