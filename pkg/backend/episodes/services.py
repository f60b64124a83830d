# episodes/services.py
import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Protocol, Sequence, Set, Tuple, Union

from spikes.services import EventSequence

logger = logging.getLogger(__name__)


class EpisodeError(ValueError):
    pass


class CandidateSizeError(ValueError):
    pass


class MiningRules:
    AUTO = 'auto'
    RATE_MODES = ('product', 'mean')
    # an episode needs at least one occurrence to be reported, whatever the threshold
    MIN_REPORTED_COUNT = 1


@dataclass(frozen=True, order=True)
class Episode:
    """A parallel episode: a set of distinct event types kept in ascending (canonical) order."""
    types: Tuple[int, ...]

    def __post_init__(self):
        if not self.types:
            raise EpisodeError("an episode needs at least one event type")
        if any(t < 0 for t in self.types):
            raise EpisodeError(f"negative event type in {self.types}")
        if any(a >= b for a, b in zip(self.types, self.types[1:])):
            raise EpisodeError(f"event types must be distinct and ascending, got {self.types}")

    @classmethod
    def of(cls, *types: int) -> 'Episode':
        if len(set(types)) != len(types):
            raise EpisodeError(f"repeated event type in {types}")
        return cls(tuple(sorted(int(t) for t in types)))

    @property
    def n(self) -> int:
        return len(self.types)

    def __len__(self):
        return len(self.types)

    def label(self, seq: Optional[EventSequence] = None) -> str:
        if seq is None:
            return ','.join(str(t) for t in self.types)
        return ','.join(seq.label_of(t) for t in self.types)

    def subepisodes(self) -> List['Episode']:
        """All episodes of size n-1 contained in this one."""
        return [Episode(sub) for sub in combinations(self.types, self.n - 1)] if self.n > 1 else []

    def issubset(self, other: 'Episode') -> bool:
        return set(self.types) <= set(other.types)


@dataclass(frozen=True)
class MiningConfig:
    expiry: int
    threshold: Union[int, str] = MiningRules.AUTO
    max_level: Optional[int] = None
    epsilon: float = 0.05
    strict: bool = False
    rate_mode: str = 'product'
    gate_singletons: bool = False

    def __post_init__(self):
        if self.expiry < 1:
            raise EpisodeError(f"expiry must be at least 1 tick, got {self.expiry}")
        if self.threshold != MiningRules.AUTO:
            if not isinstance(self.threshold, int) or self.threshold < 1:
                raise EpisodeError(f"threshold must be a count >= 1 or 'auto', got {self.threshold!r}")
        if self.max_level is not None and self.max_level < 1:
            raise EpisodeError(f"max_level must be at least 1, got {self.max_level}")
        if not 0 < self.epsilon < 1:
            raise EpisodeError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.rate_mode not in MiningRules.RATE_MODES:
            raise EpisodeError(f"rate_mode must be one of {MiningRules.RATE_MODES}")

    @property
    def is_auto(self) -> bool:
        return self.threshold == MiningRules.AUTO


class CountingState:
    """
    Latest occurrence tick of every constituent of one episode during a counting pass.
    Once all constituents are seen and their span fits the expiry, the count goes up
    and every constituent is marked unseen again.
    """
    __slots__ = ('episode', 'latest_tick', 'latest_index', 'seen', 'count', 'windows')

    def __init__(self, episode: Episode, record: bool = False):
        self.episode = episode
        self.latest_tick: List[Optional[int]] = [None] * episode.n
        self.latest_index: List[Optional[int]] = [None] * episode.n
        self.seen = 0
        self.count = 0
        self.windows: Optional[List[Tuple[int, ...]]] = [] if record else None

    def update(self, position: int, tick: int, event_index: int, expiry: int, strict: bool) -> bool:
        if self.latest_tick[position] is None:
            self.seen += 1
        self.latest_tick[position] = tick
        self.latest_index[position] = event_index

        if self.seen < self.episode.n:
            return False
        span = max(self.latest_tick) - min(self.latest_tick)
        if span > expiry or (strict and span == expiry):
            # keep refreshing latest ticks until the span fits
            return False

        self.count += 1
        if self.windows is not None:
            self.windows.append(tuple(self.latest_index))
        self.latest_tick = [None] * self.episode.n
        self.latest_index = [None] * self.episode.n
        self.seen = 0
        return True


def _check_candidates(candidates: Iterable[Episode], expiry: int) -> List[Episode]:
    if expiry < 1:
        raise EpisodeError(f"expiry must be at least 1 tick, got {expiry}")
    candidates = sorted(set(candidates))
    sizes = {ep.n for ep in candidates}
    if len(sizes) > 1:
        raise CandidateSizeError(f"candidates of mixed sizes {sorted(sizes)} cannot share a pass")
    return candidates


def run_counting_pass(
        seq: EventSequence,
        candidates: Iterable[Episode],
        expiry: int,
        strict: bool = False,
        record: bool = False,
) -> Dict[Episode, CountingState]:
    """One pass over the events, each event dispatched only to the states of episodes containing its type."""
    candidates = _check_candidates(candidates, expiry)
    states = {ep: CountingState(ep, record) for ep in candidates}

    dispatch: Dict[int, List[Tuple[CountingState, int]]] = defaultdict(list)
    for ep, state in states.items():
        for position, type_id in enumerate(ep.types):
            dispatch[type_id].append((state, position))

    for index, event in enumerate(seq.events):
        targets = dispatch.get(event.etype)
        if not targets:
            continue
        for state, position in targets:
            state.update(position, event.tick, index, expiry, strict)

    return states


def count_nonoverlapped(
        seq: EventSequence,
        candidates: Iterable[Episode],
        expiry: int,
        strict: bool = False,
) -> Dict[Episode, int]:
    states = run_counting_pass(seq, candidates, expiry, strict)
    return {ep: state.count for ep, state in states.items()}


def occurrence_windows(seq: EventSequence, episode: Episode, expiry: int, strict: bool = False) -> List[Tuple[int, ...]]:
    """Event indices (one per constituent) of every occurrence the counter accepted."""
    return run_counting_pass(seq, [episode], expiry, strict, record=True)[episode].windows


def generate_candidates(frequent: Iterable[Episode]) -> Set[Episode]:
    """
    Join frequent k-episodes sharing their first k-1 types; keep a (k+1)-candidate
    only when every one of its k-subepisodes is frequent.
    """
    frequent = set(frequent)
    by_prefix: Dict[Tuple[int, ...], List[int]] = defaultdict(list)
    for ep in frequent:
        by_prefix[ep.types[:-1]].append(ep.types[-1])

    candidates = set()
    for prefix, tails in by_prefix.items():
        for a, b in combinations(sorted(tails), 2):
            candidate = Episode(prefix + (a, b))
            if all(sub in frequent for sub in candidate.subepisodes()):
                candidates.add(candidate)
    return candidates


class ThresholdPolicy(Protocol):
    def level_thresholds(self, level: int, candidates: Sequence[Episode]) -> Dict[Episode, int]:
        ...


class FixedThreshold:

    def __init__(self, count: int):
        self.count = count

    def level_thresholds(self, level: int, candidates: Sequence[Episode]) -> Dict[Episode, int]:
        return {ep: self.count for ep in candidates}


class SizeThreshold:
    """Wraps any `size -> min-count` function."""

    def __init__(self, threshold_fn: Callable[[int], int]):
        self.threshold_fn = threshold_fn

    def level_thresholds(self, level: int, candidates: Sequence[Episode]) -> Dict[Episode, int]:
        value = self.threshold_fn(level)
        return {ep: value for ep in candidates}


class FrequentEpisode(NamedTuple):
    episode: Episode
    count: int
    threshold: int


@dataclass
class LevelStats:
    level: int
    candidates: int
    frequent: int
    min_threshold: Optional[int]
    max_threshold: Optional[int]


@dataclass
class MiningReport:
    frequent: List[FrequentEpisode] = field(default_factory=list)
    levels: List[LevelStats] = field(default_factory=list)
    runtime_s: float = 0.0

    def candidates_at(self, level: int) -> int:
        return next((stats.candidates for stats in self.levels if stats.level == level), 0)

    def episodes(self) -> Set[Episode]:
        return {item.episode for item in self.frequent}


def build_policy(seq: EventSequence, config: MiningConfig) -> ThresholdPolicy:
    if not config.is_auto:
        return FixedThreshold(config.threshold)
    # significance depends on this module's Episode type
    from significance.services import AutoThreshold
    return AutoThreshold(
        seq, config.expiry, config.epsilon, rate_mode=config.rate_mode, gate_singletons=config.gate_singletons
    )


def mine_levels(
        seq: EventSequence,
        config: MiningConfig,
        policy: Optional[ThresholdPolicy] = None,
) -> MiningReport:
    """
    Level-wise mining: count all singletons, keep the frequent ones, build the next
    level's candidates from them, and repeat until nothing is frequent or max_level.
    """
    started = time.perf_counter()
    report = MiningReport()
    if not seq.events:
        return report
    if policy is None:
        policy = build_policy(seq, config)

    candidates = [Episode((type_id,)) for type_id in range(seq.num_types)]
    level = 1
    while candidates and (config.max_level is None or level <= config.max_level):
        counts = count_nonoverlapped(seq, candidates, config.expiry, config.strict)
        thresholds = policy.level_thresholds(level, candidates)

        frequent = []
        for ep in sorted(candidates):
            threshold = thresholds[ep]
            if counts[ep] >= max(threshold, MiningRules.MIN_REPORTED_COUNT):
                frequent.append(ep)
                report.frequent.append(FrequentEpisode(ep, counts[ep], threshold))

        values = list(thresholds.values())
        report.levels.append(LevelStats(level, len(candidates), len(frequent), min(values), max(values)))
        logger.info(f"Level {level}: {len(candidates)} candidates, {len(frequent)} frequent")

        candidates = sorted(generate_candidates(frequent))
        level += 1

    report.runtime_s = time.perf_counter() - started
    return report


def mine(
        seq: EventSequence,
        config: MiningConfig,
        threshold_fn: Optional[Callable[[int], int]] = None,
) -> List[Tuple[Episode, int]]:
    policy = SizeThreshold(threshold_fn) if threshold_fn is not None else None
    report = mine_levels(seq, config, policy)
    return [(item.episode, item.count) for item in report.frequent]
