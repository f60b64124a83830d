# significance/services.py
import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import lfilter

from episodes.services import Episode, MiningRules
from spikes.services import EventSequence, estimate_rates

logger = logging.getLogger(__name__)


class InvalidProbabilityError(ValueError):
    pass


class SignificanceParamsError(ValueError):
    pass


class SignificanceRules:
    # relative slack when comparing k^2 against 1/epsilon in floating point
    CHEBYSHEV_SLACK = 1e-9
    # variance below zero by less than this is rounding noise
    VARIANCE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SignificanceParams:
    """
    L: data length (ticks), T: expiry (ticks), n: episode size, rho: firing rate in Hz
    (one shared value or one per constituent), delta_t: seconds per tick, epsilon: type-I error bound.
    """
    L: int
    T: int
    n: int
    rho: Union[float, Tuple[float, ...]]
    delta_t: float
    epsilon: float

    def __post_init__(self):
        if self.L < 0:
            raise SignificanceParamsError(f"L must be >= 0, got {self.L}")
        if self.T < 1:
            raise SignificanceParamsError(f"T must be >= 1, got {self.T}")
        if self.n < 1:
            raise SignificanceParamsError(f"n must be >= 1, got {self.n}")
        if self.delta_t <= 0:
            raise SignificanceParamsError(f"delta_t must be positive, got {self.delta_t}")
        if not 0 < self.epsilon < 1:
            raise SignificanceParamsError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if isinstance(self.rho, tuple) and len(self.rho) not in (1, self.n):
            raise SignificanceParamsError(f"{len(self.rho)} rates given for an episode of size {self.n}")

    @property
    def per_tick(self) -> Tuple[float, ...]:
        """Firing probability per tick of every constituent."""
        rates = self.rho if isinstance(self.rho, tuple) else (self.rho,)
        if len(rates) == 1:
            rates = rates * self.n
        return tuple(rate * self.delta_t for rate in rates)


@dataclass(frozen=True)
class SignificanceResult:
    p: float
    F: float
    V: float
    k: int
    threshold: float

    @property
    def min_count(self) -> int:
        """Integer count an episode must reach to be called significant."""
        return max(0, math.ceil(self.threshold - 1e-9))


def window_sum(n: int, T: int) -> int:
    """sum_{i=0}^{n-1} (T-1)^(n-1-i) T^i, the number of tick placements anchored at one instant."""
    return sum((T - 1) ** (n - 1 - i) * T ** i for i in range(n))


def anchored_probability(per_tick: Sequence[float], T: int) -> float:
    for q in per_tick:
        if not 0 <= q <= 1:
            raise InvalidProbabilityError(f"per-tick firing probability {q:g} outside [0, 1]")
    # expected anchored tuples per tick; dense data saturates at one occurrence per tick
    return min(1.0, math.prod(per_tick) * window_sum(len(per_tick), T))


def occurrence_prob(params: SignificanceParams) -> float:
    """Probability that an occurrence of an n-node episode starts at a given tick under independence."""
    return anchored_probability(params.per_tick, params.T)


def _moment_series(L: int, T: int, p: float) -> Tuple[float, float]:
    """
    F and V at L from a forward sweep. Both are linear recursive filters
    y[x] = (1-p) y[x-1] + p y[x-T] + u[x] with zero state for x < T. V uses the
    total-variance form, equal to G - F^2 without the cancellation.
    """
    if L < T or p == 0:
        return 0.0, 0.0
    a = np.zeros(T + 1)
    a[0] = 1.0
    a[1] -= 1.0 - p
    a[T] -= p

    drive = np.zeros(L + 1)
    drive[T:] = p
    F = lfilter([1.0], a, drive)

    drive[T:] = p * (1.0 - p) * (1.0 + F[:L + 1 - T] - F[T - 1:L]) ** 2
    V = lfilter([1.0], a, drive)
    return float(F[L]), float(V[L])


def _variance(V: float) -> float:
    if V < 0:
        if V < -SignificanceRules.VARIANCE_TOLERANCE:
            logger.warning(f"Variance {V:g} clamped to 0")
        return 0.0
    return V


def expected_frequency(L: int, T: int, p: float) -> float:
    """F(L,T,p) = (1-p) F(L-1,T,p) + p (1 + F(L-T,T,p)), with F = 0 whenever L < T."""
    return _moment_series(L, T, p)[0]


def frequency_variance(L: int, T: int, p: float) -> float:
    """
    G(L,T,p) - F(L,T,p)^2 where G follows the second-moment recurrence. Computed as
    V(L) = (1-p) V(L-1) + p V(L-T) + p (1-p) (1 + F(L-T) - F(L-1))^2.
    """
    return _variance(_moment_series(L, T, p)[1])


def frequency_moments(L: int, T: int, p: Union[float, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """F and V for one probability or an array of them; equal probabilities share a sweep."""
    probs = np.atleast_1d(np.asarray(p, dtype=float))
    unique, inverse = np.unique(probs, return_inverse=True)
    F = np.empty(len(unique))
    V = np.empty(len(unique))
    for i, value in enumerate(unique):
        f, v = _moment_series(L, T, float(value))
        F[i], V[i] = f, _variance(v)
    return F[inverse].reshape(probs.shape), V[inverse].reshape(probs.shape)


def chebyshev_threshold(F: float, V: float, epsilon: float) -> Tuple[int, float]:
    """k is the smallest integer with k^2 >= 1/epsilon; threshold = F + k sqrt(V)."""
    if not 0 < epsilon < 1:
        raise SignificanceParamsError(f"epsilon must lie in (0, 1), got {epsilon}")
    bound = (1.0 / epsilon) * (1.0 - SignificanceRules.CHEBYSHEV_SLACK)
    k = max(1, math.isqrt(math.floor(bound)))
    while k * k < bound:
        k += 1
    return k, F + k * math.sqrt(max(V, 0.0))


def evaluate(params: SignificanceParams) -> SignificanceResult:
    p = occurrence_prob(params)
    if params.L < params.T:
        k, _ = chebyshev_threshold(0.0, 0.0, params.epsilon)
        return SignificanceResult(p=p, F=0.0, V=0.0, k=k, threshold=0.0)
    F, V = _moment_series(params.L, params.T, p)
    V = _variance(V)
    k, threshold = chebyshev_threshold(F, V, params.epsilon)
    return SignificanceResult(p=p, F=F, V=V, k=k, threshold=threshold)


def auto_threshold(seq: EventSequence, n: int, T: int, epsilon: float) -> int:
    """Integer count threshold for n-node episodes, using the dataset mean firing rate."""
    rho = float(np.mean(estimate_rates(seq))) if seq.num_types else 0.0
    params = SignificanceParams(L=seq.length_ticks, T=T, n=n, rho=rho, delta_t=seq.delta_t, epsilon=epsilon)
    result = evaluate(params)
    logger.info(f"Auto threshold n={n}: p={result.p:.3g} F={result.F:.3f} V={result.V:.3f} -> {result.min_count}")
    return result.min_count


def episode_threshold(seq: EventSequence, episode: Episode, T: int, epsilon: float) -> int:
    """Integer count threshold for one episode, using the product of its constituents' rates."""
    rates = estimate_rates(seq)
    rho = tuple(float(rates[t]) if t < seq.num_types else 0.0 for t in episode.types)
    params = SignificanceParams(L=seq.length_ticks, T=T, n=episode.n, rho=rho, delta_t=seq.delta_t, epsilon=epsilon)
    return evaluate(params).min_count


class AutoThreshold:
    """
    Threshold policy for the level-wise miner. In `product` mode every candidate gets its own
    threshold from its constituents' estimated rates; in `mean` mode a level shares one threshold.
    """

    def __init__(
            self,
            seq: EventSequence,
            expiry: int,
            epsilon: float,
            rate_mode: str = 'product',
            gate_singletons: bool = False,
    ):
        self.seq = seq
        self.gate_singletons = gate_singletons
        self.expiry = expiry
        self.epsilon = epsilon
        self.rate_mode = rate_mode
        self.per_tick = estimate_rates(seq) * seq.delta_t
        self._by_probability: Dict[float, int] = {}

    def _min_counts(self, probabilities: np.ndarray) -> np.ndarray:
        missing = [p for p in np.unique(probabilities) if float(p) not in self._by_probability]
        if missing:
            F, V = frequency_moments(self.seq.length_ticks, self.expiry, np.array(missing))
            for p, f, v in zip(missing, F, V):
                k, threshold = chebyshev_threshold(float(f), float(v), self.epsilon)
                self._by_probability[float(p)] = SignificanceResult(float(p), float(f), float(v), k, threshold).min_count
        return np.array([self._by_probability[float(p)] for p in probabilities], dtype=int)

    def level_thresholds(self, level: int, candidates: Sequence[Episode]) -> Dict[Episode, int]:
        if not candidates:
            return {}
        if level == 1 and not self.gate_singletons:
            # ungated singletons only need to occur
            return {ep: MiningRules.MIN_REPORTED_COUNT for ep in candidates}
        if self.rate_mode == 'mean':
            q = float(np.mean(self.per_tick)) if len(self.per_tick) else 0.0
            probabilities = np.full(len(candidates), anchored_probability([q] * level, self.expiry))
        else:
            probabilities = np.array([
                anchored_probability([self.per_tick[t] for t in ep.types], self.expiry) for ep in candidates
            ])
        counts = self._min_counts(probabilities)
        return {ep: int(count) for ep, count in zip(candidates, counts)}


def simulate_counting_model(L: int, T: int, p: float, runs: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Monte Carlo of the skip process behind F and V: from each instant, with probability p
    count an occurrence and jump T ticks, otherwise advance one tick, while at least T ticks remain.
    """
    rng = rng or np.random.default_rng()
    remaining = np.full(runs, L, dtype=np.int64)
    counts = np.zeros(runs, dtype=np.int64)
    active = remaining >= T
    while active.any():
        hit = active & (rng.random(runs) < p)
        counts += hit
        remaining -= np.where(hit, T, active.astype(np.int64))
        active = remaining >= T
    return counts
