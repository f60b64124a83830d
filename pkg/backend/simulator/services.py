# simulator/services.py
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from episodes.services import Episode
from spikes.services import Event, EventSequence

logger = logging.getLogger(__name__)


class SimConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RateSegment:
    from_tick: int
    rate_hz: float


Rate = Union[float, Tuple[RateSegment, ...]]


@dataclass(frozen=True)
class EmbedSpec:
    """
    A synchronous pattern injected on top of the background. Instances are anchored either at
    explicit `ticks`, by a Poisson process of `rate_hz`, or at `instances` random distinct ticks;
    each constituent then fires once, uniformly within [anchor, anchor + jitter_span].
    """
    pattern: Episode
    jitter_span: int = 0
    rate_hz: Optional[float] = None
    ticks: Optional[Tuple[int, ...]] = None
    instances: Optional[int] = None

    def __post_init__(self):
        laws = [law for law in (self.rate_hz, self.ticks, self.instances) if law is not None]
        if len(laws) != 1:
            raise SimConfigError("an embedding needs exactly one of rate_hz, ticks or instances")
        if self.jitter_span < 0:
            raise SimConfigError(f"jitter_span must be >= 0, got {self.jitter_span}")
        if self.rate_hz is not None and self.rate_hz < 0:
            raise SimConfigError(f"embedding rate must be >= 0, got {self.rate_hz}")
        if self.instances is not None and self.instances < 0:
            raise SimConfigError(f"instances must be >= 0, got {self.instances}")


@dataclass(frozen=True)
class Connection:
    """If `source` fires at t, `target` also fires at t + delay with `probability`."""
    source: int
    target: int
    delay: int
    probability: float


@dataclass(frozen=True)
class SimConfig:
    num_neurons: int
    length_ticks: int
    delta_t: float
    base_rates: Tuple[Rate, ...]
    embedded: Tuple[EmbedSpec, ...] = ()
    connections: Tuple[Connection, ...] = ()
    seed: Optional[int] = None
    labels: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.num_neurons < 1:
            raise SimConfigError(f"num_neurons must be >= 1, got {self.num_neurons}")
        if self.length_ticks < 1:
            raise SimConfigError(f"length_ticks must be >= 1, got {self.length_ticks}")
        if self.delta_t <= 0:
            raise SimConfigError(f"delta_t must be positive, got {self.delta_t}")
        if len(self.base_rates) != self.num_neurons:
            raise SimConfigError(f"{len(self.base_rates)} rates for {self.num_neurons} neurons")
        if self.labels and len(self.labels) != self.num_neurons:
            raise SimConfigError(f"{len(self.labels)} labels for {self.num_neurons} neurons")

        for neuron, rate in enumerate(self.base_rates):
            segments = rate if isinstance(rate, tuple) else (RateSegment(0, rate),)
            if not segments or segments[0].from_tick != 0:
                raise SimConfigError(f"rate schedule of neuron {neuron} must start at tick 0")
            if any(a.from_tick >= b.from_tick for a, b in zip(segments, segments[1:])):
                raise SimConfigError(f"rate schedule of neuron {neuron} must have increasing from_tick")
            for segment in segments:
                if not 0 <= segment.rate_hz * self.delta_t <= 1:
                    raise SimConfigError(
                        f"neuron {neuron}: rate {segment.rate_hz} Hz gives firing probability "
                        f"{segment.rate_hz * self.delta_t:g} per tick, outside [0, 1]"
                    )

        for connection in self.connections:
            for neuron in (connection.source, connection.target):
                if not 0 <= neuron < self.num_neurons:
                    raise SimConfigError(f"connection refers to unknown neuron {neuron}")
            if connection.delay < 0:
                raise SimConfigError(f"connection delay must be >= 0, got {connection.delay}")
            if not 0 <= connection.probability <= 1:
                raise SimConfigError(f"conditional probability {connection.probability} outside [0, 1]")

        for spec in self.embedded:
            if spec.pattern.types[-1] >= self.num_neurons:
                raise SimConfigError(f"embedded pattern {spec.pattern.types} refers to unknown neurons")
            if spec.jitter_span >= self.length_ticks:
                raise SimConfigError(f"jitter_span {spec.jitter_span} does not fit in {self.length_ticks} ticks")
            last_anchor = self.length_ticks - 1 - spec.jitter_span
            if spec.ticks is not None and any(not 0 <= a <= last_anchor for a in spec.ticks):
                raise SimConfigError(f"embedding anchors must lie in [0, {last_anchor}]")
            if spec.instances is not None and spec.instances > last_anchor + 1:
                raise SimConfigError(f"{spec.instances} instances do not fit in {last_anchor + 1} anchor ticks")
            if spec.rate_hz is not None and spec.rate_hz * self.delta_t > 1:
                raise SimConfigError(f"embedding rate {spec.rate_hz} Hz exceeds one instance per tick")

    def with_seed(self, seed: Optional[int]) -> 'SimConfig':
        return SimConfig(
            self.num_neurons, self.length_ticks, self.delta_t, self.base_rates,
            self.embedded, self.connections, seed, self.labels,
        )


TruthEntry = Tuple[Episode, np.ndarray]


def _streams(config: SimConfig) -> List[np.random.SeedSequence]:
    """[background, connections, anchors per embedding..., jitter per embedding...]"""
    children = np.random.SeedSequence(config.seed).spawn(2 + 2 * len(config.embedded))
    return children


def _per_tick_probability(config: SimConfig, neuron: int) -> Union[float, np.ndarray]:
    rate = config.base_rates[neuron]
    if not isinstance(rate, tuple):
        return rate * config.delta_t
    q = np.empty(config.length_ticks)
    bounds = [segment.from_tick for segment in rate[1:]] + [config.length_ticks]
    for segment, end in zip(rate, bounds):
        q[segment.from_tick:end] = segment.rate_hz * config.delta_t
    return q


def _anchors(spec: EmbedSpec, config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    positions = config.length_ticks - spec.jitter_span
    if spec.ticks is not None:
        return np.array(sorted(spec.ticks), dtype=np.int64)
    if spec.instances is not None:
        return np.sort(rng.choice(positions, size=spec.instances, replace=False)).astype(np.int64)
    return np.flatnonzero(rng.random(positions) < spec.rate_hz * config.delta_t).astype(np.int64)


def embed_truth(config: SimConfig) -> List[TruthEntry]:
    """Embedded patterns and the anchor ticks `generate` uses for them."""
    streams = _streams(config)
    return [
        (spec.pattern, _anchors(spec, config, np.random.default_rng(streams[2 + i])))
        for i, spec in enumerate(config.embedded)
    ]


def generate(config: SimConfig) -> EventSequence:
    """
    Discrete-time Bernoulli spike trains: each neuron fires at tick t with probability rate * delta_t,
    then conditional connections add follower spikes, then embedded patterns are laid on top.
    """
    streams = _streams(config)
    length = config.length_ticks

    background = np.random.default_rng(streams[0])
    fired: List[np.ndarray] = []
    for neuron in range(config.num_neurons):
        q = _per_tick_probability(config, neuron)
        fired.append(np.flatnonzero(background.random(length) < q))

    coupling = np.random.default_rng(streams[1])
    for connection in config.connections:
        follower = fired[connection.source] + connection.delay
        follower = follower[follower < length]
        follower = follower[coupling.random(len(follower)) < connection.probability]
        fired[connection.target] = np.union1d(fired[connection.target], follower)

    events = [Event(int(tick), neuron) for neuron, ticks in enumerate(fired) for tick in ticks]

    for i, (pattern, anchors) in enumerate(embed_truth(config)):
        spec = config.embedded[i]
        jitter = np.random.default_rng(streams[2 + len(config.embedded) + i])
        offsets = jitter.integers(0, spec.jitter_span + 1, size=(len(anchors), pattern.n))
        for anchor, row in zip(anchors, offsets):
            events.extend(Event(int(anchor + offset), neuron) for neuron, offset in zip(pattern.types, row))

    seq = EventSequence.from_events(events, config.delta_t, length, config.num_neurons, config.labels)
    logger.info(f"Simulated {len(seq)} spikes from {config.num_neurons} neurons over {length} ticks")
    return seq


def write_truth_file(truth: Sequence[TruthEntry], path: Union[str, Path]) -> None:
    lines = ['pattern_types\tanchor_tick']
    for pattern, anchors in truth:
        lines.extend(f"{pattern.label()}\t{int(anchor)}" for anchor in anchors)
    Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')


def read_truth_file(path: Union[str, Path]) -> List[TruthEntry]:
    grouped: Dict[Episode, List[int]] = {}
    for line_number, line in enumerate(Path(path).read_text(encoding='utf-8').splitlines(), start=1):
        if not line.strip() or line_number == 1:
            continue
        try:
            types, anchor = line.split('\t')
            pattern = Episode.of(*(int(t) for t in types.split(',')))
            grouped.setdefault(pattern, []).append(int(anchor))
        except ValueError:
            raise SimConfigError(f"truth file line {line_number}: cannot read {line!r}")
    return [(pattern, np.array(anchors, dtype=np.int64)) for pattern, anchors in grouped.items()]


def truth_path(output: Union[str, Path]) -> Path:
    return Path(f"{output}.truth.tsv")
