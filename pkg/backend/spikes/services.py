# spikes/services.py
import logging
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation, ROUND_FLOOR
from functools import cached_property
from pathlib import Path
from typing import BinaryIO, Iterable, List, Optional, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)


class SpikeFileError(ValueError):

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class UndefinedRateError(ValueError):
    pass


class TrialSplitError(ValueError):
    pass


@dataclass(frozen=True)
class EventType:
    """A source of events (one neuron). Ids are dense 0..M-1 within a dataset."""
    id: int
    label: Optional[str] = None

    def __str__(self):
        return self.label if self.label is not None else str(self.id)


@dataclass(frozen=True, order=True)
class Event:
    # field order gives the (tick, etype id) total order used everywhere
    tick: int
    etype: int


@dataclass(frozen=True)
class EventSequence:
    """
    Time-ordered events on a discretized axis of `length_ticks` ticks of `delta_t` seconds.
    Immutable once built, so it can be shared freely between counters and workers.
    """
    events: Tuple[Event, ...]
    delta_t: float
    length_ticks: int
    num_types: int
    labels: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.delta_t <= 0:
            raise ValueError(f"delta_t must be positive, got {self.delta_t}")
        if self.length_ticks < 0 or self.num_types < 0:
            raise ValueError("length_ticks and num_types must be non-negative")
        if self.labels and len(self.labels) != self.num_types:
            raise ValueError(f"{len(self.labels)} labels given for {self.num_types} event types")
        previous = None
        for event in self.events:
            if previous is not None and event < previous:
                raise ValueError(f"events out of order at {event}")
            if event.tick < 0 or event.tick > self.length_ticks:
                raise ValueError(f"event tick {event.tick} outside [0, {self.length_ticks}]")
            if event.etype < 0 or event.etype >= self.num_types:
                raise ValueError(f"event type {event.etype} outside [0, {self.num_types})")
            previous = event

    @classmethod
    def from_events(
            cls,
            events: Iterable[Event],
            delta_t: float,
            length_ticks: Optional[int] = None,
            num_types: Optional[int] = None,
            labels: Tuple[str, ...] = (),
    ) -> 'EventSequence':
        # input order is not trusted
        ordered = tuple(sorted(events))
        if length_ticks is None:
            length_ticks = ordered[-1].tick if ordered else 0
        if num_types is None:
            num_types = max((e.etype for e in ordered), default=-1) + 1
            num_types = max(num_types, len(labels))
        return cls(ordered, delta_t, length_ticks, num_types, tuple(labels))

    def __len__(self):
        return len(self.events)

    @property
    def duration_s(self) -> float:
        return self.length_ticks * self.delta_t

    def event_type(self, type_id: int) -> EventType:
        label = self.labels[type_id] if self.labels else None
        return EventType(type_id, label)

    def event_types(self) -> List[EventType]:
        return [self.event_type(i) for i in range(self.num_types)]

    def label_of(self, type_id: int) -> str:
        return str(self.event_type(type_id))

    @cached_property
    def ticks(self) -> np.ndarray:
        return np.fromiter((e.tick for e in self.events), dtype=np.int64, count=len(self.events))

    @cached_property
    def etypes(self) -> np.ndarray:
        return np.fromiter((e.etype for e in self.events), dtype=np.int64, count=len(self.events))

    def counts(self) -> np.ndarray:
        """Number of events of every type, indexed by type id."""
        return np.bincount(self.etypes, minlength=self.num_types)

    @cached_property
    def ticks_by_type(self) -> List[np.ndarray]:
        """Sorted tick array per type id."""
        return [self.ticks[self.etypes == type_id] for type_id in range(self.num_types)]


class SpikeFileFormat:
    DELIMITERS = ',\t'
    HEADER_DURATION = 'duration_s'
    HEADER_LABELS = 'labels'
    HEADER_NUM_TYPES = 'num_types'
    HEADER_DELTA_T = 'delta_t'


_HEADER = re.compile(r'^#\s*(\w+)\s*=\s*(.*?)\s*$')
_RECORD = re.compile(r'^([^,\t]+)[,\t]([^,\t]+)$')


def _decimal(value: Union[float, str, Decimal]) -> Decimal:
    return value if isinstance(value, Decimal) else Decimal(str(value))


def _format_decimal(value: Decimal) -> str:
    text = format(value.normalize(), 'f')
    return text if text != '-0' else '0'


def quantize(timestamp: Decimal, step: Decimal) -> int:
    """floor(timestamp / step), exact for decimal text input."""
    return int((timestamp / step).to_integral_value(rounding=ROUND_FLOOR))


def parse_spike_file(source: BinaryIO, delta_t: float) -> EventSequence:
    """
    Read `timestamp<TAB or comma>event_id` records into an EventSequence.

    `#` lines are comments; `# duration_s=`, `# labels=` and `# num_types=` headers
    fix the length, labels and number of sources. Ticks are floor(timestamp / delta_t).
    """
    step = _decimal(delta_t)
    if step <= 0:
        raise SpikeFileError(f"delta_t must be positive, got {delta_t}")

    events = []
    duration = None
    labels: Tuple[str, ...] = ()
    declared_types = None

    for line_number, raw in enumerate(source, start=1):
        try:
            line = raw.decode('utf-8') if isinstance(raw, bytes) else raw
        except UnicodeDecodeError:
            raise SpikeFileError("not UTF-8 text", line_number)
        line = line.strip()
        if not line:
            continue

        if line.startswith('#'):
            header = _HEADER.match(line)
            if not header:
                continue
            key, value = header.groups()
            try:
                if key == SpikeFileFormat.HEADER_DURATION:
                    duration = Decimal(value)
                    if not duration.is_finite() or duration < 0:
                        raise SpikeFileError(f"invalid duration {value!r}", line_number)
                elif key == SpikeFileFormat.HEADER_LABELS:
                    labels = tuple(label.strip() for label in value.split(',')) if value else ()
                elif key == SpikeFileFormat.HEADER_NUM_TYPES:
                    declared_types = int(value)
                elif key == SpikeFileFormat.HEADER_DELTA_T and _decimal(value) != step:
                    logger.warning(f"File declares delta_t={value}, reading with delta_t={delta_t}")
            except (InvalidOperation, ValueError) as e:
                if isinstance(e, SpikeFileError):
                    raise
                raise SpikeFileError(f"invalid header value {value!r} for {key}", line_number)
            continue

        record = _RECORD.match(line)
        if not record:
            raise SpikeFileError(f"expected 'timestamp,event_id', got {line!r}", line_number)
        raw_time, raw_id = (part.strip() for part in record.groups())
        try:
            timestamp = Decimal(raw_time)
        except InvalidOperation:
            raise SpikeFileError(f"invalid timestamp {raw_time!r}", line_number)
        if not timestamp.is_finite():
            raise SpikeFileError(f"invalid timestamp {raw_time!r}", line_number)
        try:
            event_id = int(raw_id)
        except ValueError:
            raise SpikeFileError(f"invalid event id {raw_id!r}", line_number)
        if timestamp < 0:
            raise SpikeFileError(f"negative timestamp {raw_time}", line_number)
        if event_id < 0:
            raise SpikeFileError(f"negative event id {event_id}", line_number)
        if labels and event_id >= len(labels):
            raise SpikeFileError(f"event id {event_id} has no label", line_number)

        events.append(Event(quantize(timestamp, step), event_id))

    max_tick = max((e.tick for e in events), default=0)
    if duration is not None:
        length_ticks = quantize(duration, step)
        if length_ticks < max_tick:
            raise SpikeFileError(
                f"declared duration {duration}s ({length_ticks} ticks) ends before the last event at tick {max_tick}"
            )
    else:
        length_ticks = max_tick

    num_types = max((e.etype for e in events), default=-1) + 1
    num_types = max(num_types, len(labels), declared_types or 0)
    if labels and len(labels) != num_types:
        raise SpikeFileError(f"{len(labels)} labels for {num_types} event types")

    seq = EventSequence.from_events(events, float(delta_t), length_ticks, num_types, labels)
    logger.info(f"Parsed {len(seq)} events, {num_types} types, L={length_ticks} ticks")
    return seq


def serialize_spike_file(seq: EventSequence) -> str:
    step = _decimal(seq.delta_t)
    lines = [
        f"# {SpikeFileFormat.HEADER_DELTA_T}={_format_decimal(step)}",
        f"# {SpikeFileFormat.HEADER_DURATION}={_format_decimal(step * seq.length_ticks)}",
        f"# {SpikeFileFormat.HEADER_NUM_TYPES}={seq.num_types}",
    ]
    if seq.labels:
        lines.append(f"# {SpikeFileFormat.HEADER_LABELS}={','.join(seq.labels)}")
    for event in seq.events:
        lines.append(f"{_format_decimal(step * event.tick)},{event.etype}")
    return '\n'.join(lines) + '\n'


def load_spike_file(path: Union[str, Path], delta_t: float) -> EventSequence:
    with open(path, 'rb') as source:
        return parse_spike_file(source, delta_t)


def write_spike_file(seq: EventSequence, path: Union[str, Path]) -> None:
    Path(path).write_text(serialize_spike_file(seq), encoding='utf-8')


def _type_id(etype: Union[EventType, int]) -> int:
    return etype.id if isinstance(etype, EventType) else int(etype)


def estimate_rate(seq: EventSequence, etype: Union[EventType, int]) -> float:
    """Average firing rate in Hz: event count over the recording duration."""
    if seq.length_ticks == 0:
        raise UndefinedRateError("cannot estimate a rate on a zero-length sequence")
    type_id = _type_id(etype)
    count = int(seq.counts()[type_id]) if type_id < seq.num_types else 0
    return count / seq.duration_s


def estimate_rates(seq: EventSequence) -> np.ndarray:
    if seq.length_ticks == 0:
        raise UndefinedRateError("cannot estimate a rate on a zero-length sequence")
    return seq.counts() / seq.duration_s


def split_trials(seq: EventSequence, n_trials: int) -> List[EventSequence]:
    """
    Cut the sequence into n_trials contiguous segments of floor(L / n_trials) ticks,
    the last one absorbing the remainder. Ticks are re-based to each segment start.
    """
    if n_trials < 1:
        raise TrialSplitError(f"n_trials must be at least 1, got {n_trials}")
    if n_trials > seq.length_ticks:
        raise TrialSplitError(f"cannot split {seq.length_ticks} ticks into {n_trials} trials")

    width = seq.length_ticks // n_trials
    ticks = seq.ticks
    trials = []
    for i in range(n_trials):
        start = i * width
        last = i == n_trials - 1
        end = seq.length_ticks + 1 if last else start + width
        lo, hi = np.searchsorted(ticks, [start, end], side='left')
        segment = tuple(Event(e.tick - start, e.etype) for e in seq.events[lo:hi])
        length = seq.length_ticks - start if last else width
        trials.append(EventSequence(segment, seq.delta_t, length, seq.num_types, seq.labels))
    return trials
