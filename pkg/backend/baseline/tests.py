import io
import tempfile
from itertools import combinations, product
from pathlib import Path

import numpy as np
from django.core.management import CommandError, call_command
from django.test import SimpleTestCase, override_settings

from episodes.services import Episode, count_nonoverlapped
from simulator.services import EmbedSpec, SimConfig, generate
from spikes.samples import A, B, C, D, E, worked_example
from spikes.services import Event, EventSequence, serialize_spike_file, write_spike_file

from .services import (
    PatternExplosionError,
    SurrogateConfig,
    SurrogateConfigError,
    count_all_occurrences,
    enumerate_patterns,
    jitter_surrogate,
    run_baseline,
    surrogate_significance,
)


def cross_product_count(seq, pattern, T):
    """Brute force: every choice of one event per constituent type."""
    per_type = [[e.tick for e in seq.events if e.etype == t] for t in pattern.types]
    return sum(1 for combo in product(*per_type) if max(combo) - min(combo) <= T)


def small_sequence(rng, num_types=4):
    length = int(rng.integers(10, 200))
    size = int(rng.integers(0, 101))
    ticks = rng.integers(0, length + 1, size=size)
    etypes = rng.integers(0, num_types, size=size)
    return EventSequence.from_events(
        [Event(int(t), int(e)) for t, e in zip(ticks, etypes)], 0.001, length, num_types
    )


class CountAllOccurrencesTests(SimpleTestCase):

    def test_worked_example(self):
        seq = worked_example()
        self.assertEqual(count_all_occurrences(seq, Episode.of(A, B, C), 5), 2)
        self.assertEqual(count_all_occurrences(seq, Episode.of(A), 5), 3)
        self.assertEqual(count_all_occurrences(seq, Episode.of(A), 1), 3)

    def test_absent_type(self):
        seq = worked_example()
        self.assertEqual(count_all_occurrences(seq, Episode.of(A, 7), 5), 0)
        empty = EventSequence.from_events([], 1.0, 10, 3)
        self.assertEqual(count_all_occurrences(empty, Episode.of(0, 1), 5), 0)

    def test_matches_cross_product(self):
        rng = np.random.default_rng(2024)
        patterns = [Episode(c) for size in (1, 2, 3) for c in combinations(range(4), size)]
        for _ in range(100):
            seq = small_sequence(rng)
            T = int(rng.integers(0, 11))
            for pattern in patterns:
                self.assertEqual(
                    count_all_occurrences(seq, pattern, T), cross_product_count(seq, pattern, T),
                    f"{pattern} T={T}",
                )

    def test_same_tick_events_counted_once_per_tuple(self):
        seq = EventSequence.from_events([Event(4, 0), Event(4, 1), Event(4, 1), Event(4, 2)], 1.0, 10, 3)
        self.assertEqual(count_all_occurrences(seq, Episode.of(0, 1, 2), 0), 2)

    def test_dominates_non_overlapped(self):
        rng = np.random.default_rng(77)
        for _ in range(100):
            seq = small_sequence(rng)
            T = int(rng.integers(1, 11))
            pattern = Episode(tuple(sorted(rng.choice(4, size=int(rng.integers(1, 4)), replace=False).tolist())))
            nonoverlapped = count_nonoverlapped(seq, [pattern], T)[pattern]
            self.assertGreaterEqual(count_all_occurrences(seq, pattern, T), nonoverlapped)


class EnumeratePatternsTests(SimpleTestCase):

    def test_worked_example_pairs(self):
        found = enumerate_patterns(worked_example(), 5, max_size=2)
        pairs = {p for p in found if p.n == 2}
        expected = {Episode.of(*pair) for pair in [
            (A, B), (A, C), (A, D), (B, C), (B, D), (C, D), (A, E), (B, E), (C, E),
        ]}
        self.assertEqual(pairs, expected)
        self.assertEqual({p for p in found if p.n == 1}, {Episode.of(t) for t in range(5)})

    def test_empty_sequence(self):
        self.assertEqual(enumerate_patterns(EventSequence.from_events([], 1.0, 10, 3), 5, 2), set())

    def test_zero_window_keeps_identical_ticks(self):
        seq = EventSequence.from_events([Event(0, 0), Event(0, 1), Event(1, 2)], 1.0, 5, 3)
        pairs = {p for p in enumerate_patterns(seq, 0, max_size=2) if p.n == 2}
        self.assertEqual(pairs, {Episode.of(0, 1)})

    def test_matches_occurring_patterns(self):
        rng = np.random.default_rng(5)
        universe = [Episode(c) for size in (1, 2, 3) for c in combinations(range(4), size)]
        for _ in range(30):
            seq = small_sequence(rng)
            T = int(rng.integers(0, 8))
            expected = {p for p in universe if count_all_occurrences(seq, p, T) >= 1}
            self.assertEqual(enumerate_patterns(seq, T, max_size=3), expected)

    def test_explosion_guard(self):
        seq = EventSequence.from_events([Event(0, t) for t in range(30)], 1.0, 5, 30)
        with self.assertRaises(PatternExplosionError):
            enumerate_patterns(seq, 1, type_cap=25)
        self.assertEqual(len(enumerate_patterns(seq, 1, max_size=2, type_cap=25)), 30 + 435)


class JitterSurrogateTests(SimpleTestCase):

    def setUp(self):
        config = SimConfig(4, 5000, 0.001, (20.0,) * 4, seed=12)
        self.seq = generate(config)

    def test_zero_window_is_identity(self):
        self.assertEqual(serialize_spike_file(jitter_surrogate(self.seq, 0, 1)), serialize_spike_file(self.seq))

    def test_counts_preserved_and_shift_bounded(self):
        surrogate = jitter_surrogate(self.seq, 3, seed=9)
        np.testing.assert_array_equal(surrogate.counts(), self.seq.counts())
        for original, shifted in zip(self.seq.ticks_by_type, surrogate.ticks_by_type):
            # sorting within a type preserves the per-event bound
            self.assertTrue((np.abs(shifted - original) <= 3).all())
            self.assertTrue(((shifted >= 0) & (shifted <= self.seq.length_ticks)).all())

    def test_deterministic(self):
        self.assertEqual(jitter_surrogate(self.seq, 3, 9).events, jitter_surrogate(self.seq, 3, 9).events)

    def test_clamped_at_edges(self):
        seq = EventSequence.from_events([Event(0, 0), Event(10, 0)], 1.0, 10, 1)
        for seed in range(20):
            ticks = jitter_surrogate(seq, 5, seed).ticks
            self.assertTrue(((ticks >= 0) & (ticks <= 10)).all())


class SurrogateConfigTests(SimpleTestCase):

    def test_invariants(self):
        with self.assertRaises(SurrogateConfigError):
            SurrogateConfig(alpha=1.0)
        with self.assertRaises(SurrogateConfigError):
            SurrogateConfig(n_surrogates=0)
        with self.assertRaises(SurrogateConfigError):
            SurrogateConfig(jitter_window=-1)

    def test_default_jitter_window(self):
        self.assertEqual(SurrogateConfig().window_for(5), 10)
        self.assertEqual(SurrogateConfig(jitter_window=3).window_for(5), 3)

    @override_settings(SYNCHRONY={'SURROGATES': 7, 'TRIALS': 4, 'ALPHA': 0.1, 'PATTERN_TYPE_CAP': 25})
    def test_from_settings(self):
        cfg = SurrogateConfig.from_settings(seed=3, alpha=None)
        self.assertEqual((cfg.n_surrogates, cfg.n_trials, cfg.alpha, cfg.seed), (7, 4, 0.1, 3))


class SurrogateSignificanceTests(SimpleTestCase):

    def synchronous_trials(self, n_trials=4):
        anchors = tuple(range(10, 2000, 40))
        config = SimConfig(
            3, 2000, 0.001, (0.0,) * 3,
            embedded=(EmbedSpec(Episode((0, 1, 2)), jitter_span=0, ticks=anchors),), seed=1,
        )
        return [generate(config.with_seed(i)) for i in range(n_trials)]

    def test_absent_pattern(self):
        trials = self.synchronous_trials()
        empty = [EventSequence(t.events, t.delta_t, t.length_ticks, 5) for t in trials]
        observed, means, significant = surrogate_significance(
            empty, Episode((3, 4)), 5, SurrogateConfig(n_surrogates=5, seed=0)
        )
        self.assertEqual(observed, 0.0)
        self.assertTrue((means == 0).all())
        self.assertFalse(significant)

    def test_embedded_pattern_significant(self):
        trials = self.synchronous_trials()
        observed, means, significant = surrogate_significance(
            trials, Episode((0, 1, 2)), 5, SurrogateConfig(n_surrogates=10, seed=4)
        )
        self.assertEqual(observed, 50.0)
        self.assertEqual(len(means), 10)
        self.assertTrue((means < observed).all())
        self.assertTrue(significant)

    def test_rejects_no_trials(self):
        with self.assertRaises(SurrogateConfigError):
            surrogate_significance([], Episode((0, 1)), 5, SurrogateConfig())


class RunBaselineTests(SimpleTestCase):

    def test_finds_embedded_pattern(self):
        config = SimConfig(
            6, 20_000, 0.001, (5.0,) * 6,
            embedded=(EmbedSpec(Episode((0, 1, 2)), jitter_span=2, instances=100),), seed=31,
        )
        report = run_baseline(generate(config), 5, SurrogateConfig(n_surrogates=10, n_trials=5, seed=2))
        self.assertIn(Episode((0, 1, 2)), report.episodes())
        self.assertTrue(all(result.pattern.n >= 2 for result in report.results))
        self.assertGreater(report.runtime_s, 0)

    def test_silent_data(self):
        seq = EventSequence.from_events([], 0.001, 1000, 3)
        report = run_baseline(seq, 5, SurrogateConfig(n_surrogates=3, n_trials=2, seed=0))
        self.assertEqual(report.results, [])


class BaselineCommandTests(SimpleTestCase):

    def test_reports_embedded_pattern(self):
        config = SimConfig(
            4, 10_000, 0.001, (5.0,) * 4,
            embedded=(EmbedSpec(Episode((1, 2)), jitter_span=1, instances=60),), seed=8,
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'spikes.csv'
            write_spike_file(generate(config), path)
            out = io.StringIO()
            call_command(
                'baseline', str(path), '--expiry', '3', '--surrogates', '10', '--trials', '5',
                '--seed', '1', '--max-size', '3', stdout=out,
            )
        lines = out.getvalue().splitlines()
        self.assertEqual(lines[0], 'pattern\tsize\tobserved_mean\tquantile\tsignificant')
        self.assertIn('1,2', [line.split('\t')[0] for line in lines[1:]])

    def test_bad_alpha(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'spikes.csv'
            path.write_text('0.001,0\n')
            with self.assertRaises(CommandError) as raised:
                call_command('baseline', str(path), '--expiry', '3', '--alpha', '1.0')
        self.assertEqual(raised.exception.returncode, 2)
