# bench/services.py
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from baseline.services import SurrogateConfig, run_baseline
from episodes.services import Episode, MiningConfig, mine_levels
from simulator.services import EmbedSpec, SimConfig, generate

logger = logging.getLogger(__name__)


class BenchGridError(ValueError):
    pass


class BenchDefaults:
    NUM_NEURONS = 20
    RATE_HZ = 5.0
    LENGTH_TICKS = 50_000
    DELTA_T = 0.001
    EXPIRY = 5

    EMBED_SIZES = (3, 5, 7)
    INSTANCES = 150
    # embedded instances spread over at most this many ticks (capped by the expiry)
    JITTER_SPAN = 3

    PE_RUNS = 100
    BASELINE_RUNS = 20
    # largest pattern the bench command lets the baseline test
    BASELINE_MAX_SIZE = 3
    EPSILON = 0.05

    VARY = ('length', 'rate', 'neurons', 'expiry')
    PE = 'pe'
    BASELINE = 'baseline'
    METHODS = (PE, BASELINE)
    # smallest episode that takes part in false-positive and recall scoring
    MIN_SCORED_SIZE = 2


@dataclass(frozen=True)
class BenchPoint:
    num_neurons: int = BenchDefaults.NUM_NEURONS
    rate_hz: float = BenchDefaults.RATE_HZ
    length_ticks: int = BenchDefaults.LENGTH_TICKS
    expiry: int = BenchDefaults.EXPIRY
    delta_t: float = BenchDefaults.DELTA_T

    def varied(self, vary: str, value: float) -> 'BenchPoint':
        if vary == 'rate':
            return replace(self, rate_hz=float(value))
        if float(value) != int(value):
            raise BenchGridError(f"{vary} takes whole numbers, got {value}")
        name = {'length': 'length_ticks', 'neurons': 'num_neurons', 'expiry': 'expiry'}[vary]
        return replace(self, **{name: int(value)})

    def check(self, embed_sizes: Sequence[int]):
        if self.num_neurons < 1 or self.length_ticks < 1 or self.expiry < 1:
            raise BenchGridError(f"grid point {self} needs positive neurons, length and expiry")
        if not 0 <= self.rate_hz * self.delta_t <= 1:
            raise BenchGridError(f"rate {self.rate_hz} Hz is not a firing probability at delta_t={self.delta_t}")
        if sum(embed_sizes) > self.num_neurons:
            raise BenchGridError(
                f"patterns of sizes {list(embed_sizes)} need {sum(embed_sizes)} neurons, grid point has {self.num_neurons}"
            )


@dataclass
class BenchRow:
    value: float
    method: str
    runs: int
    runtime_s: float
    fpr: Optional[float]
    found: int
    embedded: int
    recall: Optional[float]


def _optional_float(text: str) -> Optional[float]:
    return None if text == 'n/a' else float(text)


BENCH_COLUMNS = ('vary', 'value', 'method', 'runs', 'runtime_s', 'fpr', 'found', 'embedded', 'recall')


@dataclass
class BenchReport:
    vary: str
    rows: List[BenchRow] = field(default_factory=list)
    seed: Optional[int] = None
    parameters: Dict = field(default_factory=dict)

    def row_dicts(self) -> List[Dict]:
        return [{'vary': self.vary, **asdict(row)} for row in self.rows]

    def to_tsv(self) -> str:
        lines = ['\t'.join(BENCH_COLUMNS)]
        for row in self.row_dicts():
            lines.append('\t'.join('n/a' if row[c] is None else str(row[c]) for c in BENCH_COLUMNS))
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_tsv(cls, text: str) -> 'BenchReport':
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines or tuple(lines[0].split('\t')) != BENCH_COLUMNS:
            raise BenchGridError("not a bench report: unexpected header")
        vary = None
        rows = []
        for line_number, line in enumerate(lines[1:], start=2):
            parts = line.split('\t')
            if len(parts) != len(BENCH_COLUMNS):
                raise BenchGridError(f"bench report line {line_number}: expected {len(BENCH_COLUMNS)} columns")
            cells = dict(zip(BENCH_COLUMNS, parts))
            vary = cells['vary']
            rows.append(BenchRow(
                value=float(cells['value']),
                method=cells['method'],
                runs=int(cells['runs']),
                runtime_s=float(cells['runtime_s']),
                fpr=_optional_float(cells['fpr']),
                found=int(cells['found']),
                embedded=int(cells['embedded']),
                recall=_optional_float(cells['recall']),
            ))
        if vary is None:
            raise BenchGridError("bench report has no rows")
        return cls(vary=vary, rows=rows)

    def summary(self) -> str:
        """One line per grid value: runtimes and false-positive rates of both methods side by side."""
        by_value: Dict[float, Dict[str, BenchRow]] = {}
        for row in self.rows:
            by_value.setdefault(row.value, {})[row.method] = row

        def cell(row: Optional[BenchRow], attr: str) -> str:
            if row is None:
                return '-'
            value = getattr(row, attr)
            if value is None:
                return 'n/a'
            return f"{value:.3f}" if attr == 'runtime_s' else f"{100 * value:.0f}%"

        lines = [f"{self.vary:>10}  {'PE time':>9}  {'BL time':>9}  {'PE FPR':>7}  {'BL FPR':>7}"]
        for value, methods in by_value.items():
            pe, bl = methods.get(BenchDefaults.PE), methods.get(BenchDefaults.BASELINE)
            lines.append(
                f"{value:>10g}  {cell(pe, 'runtime_s'):>9}  {cell(bl, 'runtime_s'):>9}  "
                f"{cell(pe, 'fpr'):>7}  {cell(bl, 'fpr'):>7}"
            )
        return '\n'.join(lines) + '\n'


@dataclass
class RunScore:
    reported: int = 0
    false_positives: int = 0
    recovered: int = 0
    embedded: int = 0

    def add(self, other: 'RunScore') -> 'RunScore':
        return RunScore(
            self.reported + other.reported,
            self.false_positives + other.false_positives,
            self.recovered + other.recovered,
            self.embedded + other.embedded,
        )

    @property
    def fpr(self) -> Optional[float]:
        return self.false_positives / self.reported if self.reported else None

    @property
    def recall(self) -> Optional[float]:
        return self.recovered / self.embedded if self.embedded else None


def score(found: Iterable[Episode], truth: Sequence[Episode]) -> RunScore:
    """
    A reported episode is a false positive when its types are not contained in any embedded
    pattern; an embedded pattern is recovered only when reported exactly.
    """
    reported: Set[Episode] = {ep for ep in found if ep.n >= BenchDefaults.MIN_SCORED_SIZE}
    false_positives = sum(1 for ep in reported if not any(ep.issubset(pattern) for pattern in truth))
    recovered = sum(1 for pattern in truth if pattern in reported)
    return RunScore(len(reported), false_positives, recovered, len(truth))


def embedding_plan(point: BenchPoint, embed_sizes: Sequence[int], instances: int) -> Tuple[EmbedSpec, ...]:
    """Patterns of the requested sizes on consecutive, disjoint neurons starting at 0."""
    jitter_span = min(BenchDefaults.JITTER_SPAN, point.expiry)
    specs, first = [], 0
    for size in embed_sizes:
        specs.append(EmbedSpec(Episode(tuple(range(first, first + size))), jitter_span, instances=instances))
        first += size
    return tuple(specs)


def _run_seed(seed: int, grid_index: int, run: int) -> int:
    return int(np.random.SeedSequence([seed, grid_index, run]).generate_state(1)[0])


def run_bench(
        vary: str,
        values: Sequence[float],
        runs: int = BenchDefaults.PE_RUNS,
        baseline_runs: int = BenchDefaults.BASELINE_RUNS,
        methods: Sequence[str] = BenchDefaults.METHODS,
        epsilon: float = BenchDefaults.EPSILON,
        embed_sizes: Sequence[int] = BenchDefaults.EMBED_SIZES,
        instances: int = BenchDefaults.INSTANCES,
        seed: int = 0,
        base: BenchPoint = BenchPoint(),
        surrogates: Optional[SurrogateConfig] = None,
        baseline_max_size: Optional[int] = None,
) -> BenchReport:
    """
    For every grid value simulate `runs` datasets with embedded patterns, mine each with the
    significance threshold and, on the first `baseline_runs` of them, run the surrogate baseline.
    Runtimes cover counting and significance only; scores are pooled over the runs.
    """
    if vary not in BenchDefaults.VARY:
        raise BenchGridError(f"--vary must be one of {BenchDefaults.VARY}, got {vary!r}")
    if not values:
        raise BenchGridError("the grid needs at least one value")
    unknown = set(methods) - set(BenchDefaults.METHODS)
    if unknown or not methods:
        raise BenchGridError(f"methods must be chosen from {BenchDefaults.METHODS}, got {list(methods)}")
    if runs < 1 or (BenchDefaults.BASELINE in methods and baseline_runs < 1):
        raise BenchGridError("runs must be at least 1")
    if any(size < 1 for size in embed_sizes) or instances < 0:
        raise BenchGridError("embedded pattern sizes must be >= 1 and instances >= 0")
    points = [base.varied(vary, value) for value in values]
    for point in points:
        point.check(embed_sizes)
    surrogates = surrogates or SurrogateConfig.from_settings()

    report = BenchReport(vary=vary, seed=seed, parameters={
        'runs': runs,
        'baseline_runs': baseline_runs,
        'methods': list(methods),
        'epsilon': epsilon,
        'embed_sizes': list(embed_sizes),
        'instances': instances,
        'baseline_max_size': baseline_max_size,
        'base': asdict(base),
    })

    for grid_index, (value, point) in enumerate(zip(values, points)):
        embedded = embedding_plan(point, embed_sizes, instances)
        truth = [spec.pattern for spec in embedded]
        mining = MiningConfig(expiry=point.expiry, epsilon=epsilon)
        method_runs = {
            BenchDefaults.PE: runs if BenchDefaults.PE in methods else 0,
            BenchDefaults.BASELINE: baseline_runs if BenchDefaults.BASELINE in methods else 0,
        }
        runtimes: Dict[str, List[float]] = {method: [] for method in method_runs}
        scores: Dict[str, RunScore] = {method: RunScore() for method in method_runs}

        for run in range(max(method_runs.values())):
            run_seed = _run_seed(seed, grid_index, run)
            config = SimConfig(
                num_neurons=point.num_neurons,
                length_ticks=point.length_ticks,
                delta_t=point.delta_t,
                base_rates=(point.rate_hz,) * point.num_neurons,
                embedded=embedded,
                seed=run_seed,
            )
            seq = generate(config)

            if run < method_runs[BenchDefaults.PE]:
                started = time.perf_counter()
                mined = mine_levels(seq, mining)
                runtimes[BenchDefaults.PE].append(time.perf_counter() - started)
                scores[BenchDefaults.PE] = scores[BenchDefaults.PE].add(score(mined.episodes(), truth))

            if run < method_runs[BenchDefaults.BASELINE]:
                cfg = replace(surrogates, seed=run_seed)
                tested = run_baseline(seq, point.expiry, cfg, baseline_max_size)
                runtimes[BenchDefaults.BASELINE].append(tested.runtime_s)
                scores[BenchDefaults.BASELINE] = scores[BenchDefaults.BASELINE].add(score(tested.episodes(), truth))

        for method in BenchDefaults.METHODS:
            if not method_runs[method]:
                continue
            total = scores[method]
            report.rows.append(BenchRow(
                value=float(value),
                method=method,
                runs=method_runs[method],
                runtime_s=float(np.mean(runtimes[method])),
                fpr=total.fpr,
                found=total.reported,
                embedded=total.embedded,
                recall=total.recall,
            ))
            logger.info(
                f"{vary}={value:g} {method}: {np.mean(runtimes[method]):.3f}s over {method_runs[method]} runs, "
                f"{total.reported} reported, {total.false_positives} false positives, "
                f"{total.recovered}/{total.embedded} recovered"
            )

    return report
