import io
import math
import tempfile
from pathlib import Path

import numpy as np
from django.core.management import CommandError, call_command
from django.test import SimpleTestCase, tag

from episodes.services import Episode, MiningConfig, count_nonoverlapped, mine_levels
from significance.services import anchored_probability, episode_threshold, expected_frequency
from spikes.services import load_spike_file, serialize_spike_file

from .serializers import parse_sim_config
from .services import (
    Connection,
    EmbedSpec,
    RateSegment,
    SimConfig,
    SimConfigError,
    embed_truth,
    generate,
    read_truth_file,
    truth_path,
    write_truth_file,
)


def background(num_neurons=20, rate=5.0, length=50_000, seed=1, **extra):
    return SimConfig(
        num_neurons=num_neurons,
        length_ticks=length,
        delta_t=0.001,
        base_rates=(rate,) * num_neurons,
        seed=seed,
        **extra,
    )


def with_patterns(sizes, instances=150, num_neurons=20, seed=1, jitter_span=4):
    embedded, first = [], 0
    for size in sizes:
        embedded.append(EmbedSpec(Episode(tuple(range(first, first + size))), jitter_span, instances=instances))
        first += size
    return background(num_neurons=num_neurons, seed=seed, embedded=tuple(embedded))


class GenerateTests(SimpleTestCase):

    def test_silent_config_gives_empty_sequence(self):
        seq = generate(background(rate=0.0, length=1000))
        self.assertEqual(len(seq), 0)
        self.assertEqual(seq.length_ticks, 1000)
        self.assertEqual(seq.num_types, 20)

    def test_deterministic_given_seed(self):
        config = with_patterns([3], instances=20, seed=42)
        self.assertEqual(serialize_spike_file(generate(config)), serialize_spike_file(generate(config)))
        self.assertNotEqual(generate(config).events, generate(config.with_seed(43)).events)

    def test_spike_count_within_binomial_bounds(self):
        seq = generate(background(num_neurons=1, seed=3))
        q = 0.005
        sigma = math.sqrt(50_000 * q * (1 - q))
        self.assertLess(abs(len(seq) - 250), 3 * sigma)

    def test_marginal_rates(self):
        rates = (5.0, 10.0, 20.0)
        length = 100_000
        config = SimConfig(3, length, 0.001, rates, seed=9)
        counts = generate(config).counts()
        for rate, count in zip(rates, counts):
            q = rate * 0.001
            self.assertLess(abs(count - length * q), 4 * math.sqrt(length * q * (1 - q)))

    def test_silent_background_counts_every_instance(self):
        anchors = tuple(range(0, 2000, 20))
        config = SimConfig(
            3, 2100, 0.001, (0.0, 0.0, 0.0),
            embedded=(EmbedSpec(Episode((0, 1, 2)), jitter_span=5, ticks=anchors),), seed=5,
        )
        seq = generate(config)
        self.assertEqual(len(seq), 300)
        counts = count_nonoverlapped(seq, [Episode((0, 1, 2))], 5)
        self.assertEqual(counts[Episode((0, 1, 2))], 100)

    def test_embedded_spikes_stay_in_their_window(self):
        config = SimConfig(
            2, 1000, 0.001, (0.0, 0.0),
            embedded=(EmbedSpec(Episode((0, 1)), jitter_span=3, ticks=(100, 600)),), seed=2,
        )
        seq = generate(config)
        for event in seq.events:
            self.assertTrue(100 <= event.tick <= 103 or 600 <= event.tick <= 603)

    def test_certain_connection_copies_the_source(self):
        config = SimConfig(
            2, 20_000, 0.001, (20.0, 0.0),
            connections=(Connection(source=0, target=1, delay=3, probability=1.0),), seed=8,
        )
        seq = generate(config)
        source, target = seq.ticks_by_type
        expected = source + 3
        np.testing.assert_array_equal(target, expected[expected < 20_000])

    def test_piecewise_rate_schedule(self):
        schedule = (RateSegment(0, 0.0), RateSegment(5000, 100.0))
        seq = generate(SimConfig(1, 10_000, 0.001, (schedule,), seed=4))
        self.assertTrue(all(event.tick >= 5000 for event in seq.events))
        self.assertLess(abs(len(seq) - 500), 4 * math.sqrt(5000 * 0.1 * 0.9))


class EmbedTruthTests(SimpleTestCase):

    def test_no_embeddings(self):
        self.assertEqual(embed_truth(background(length=100)), [])

    def test_explicit_anchors_returned(self):
        config = background(length=1000, embedded=(EmbedSpec(Episode((0, 1)), ticks=(500, 10)),))
        [(pattern, anchors)] = embed_truth(config)
        self.assertEqual(pattern, Episode((0, 1)))
        self.assertEqual(anchors.tolist(), [10, 500])

    def test_poisson_anchors_repeat_with_seed(self):
        config = background(length=10_000, embedded=(EmbedSpec(Episode((2, 3)), rate_hz=2.0),), seed=17)
        first = embed_truth(config)[0][1]
        self.assertGreater(len(first), 0)
        np.testing.assert_array_equal(first, embed_truth(config)[0][1])

    def test_instance_law_places_distinct_anchors(self):
        config = with_patterns([3, 5], instances=150)
        for pattern, anchors in embed_truth(config):
            self.assertEqual(len(anchors), 150)
            self.assertEqual(len(set(anchors.tolist())), 150)
            self.assertTrue((anchors <= 50_000 - 1 - 4).all())

    def test_truth_file_round_trip(self):
        truth = embed_truth(with_patterns([3, 5], instances=10))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'run.truth.tsv'
            write_truth_file(truth, path)
            self.assertEqual(path.read_text().splitlines()[0], 'pattern_types\tanchor_tick')
            restored = read_truth_file(path)
        self.assertEqual([p for p, _ in restored], [p for p, _ in truth])
        for (_, a), (_, b) in zip(restored, truth):
            np.testing.assert_array_equal(a, b)


class SimConfigTests(SimpleTestCase):

    def test_rejects_probability_above_one(self):
        with self.assertRaises(SimConfigError):
            SimConfig(1, 100, 0.001, (2000.0,))

    def test_rejects_bad_connections_and_embeddings(self):
        with self.assertRaises(SimConfigError):
            SimConfig(2, 100, 0.001, (1.0, 1.0), connections=(Connection(0, 2, 1, 0.5),))
        with self.assertRaises(SimConfigError):
            SimConfig(2, 100, 0.001, (1.0, 1.0), connections=(Connection(0, 1, 1, 1.5),))
        with self.assertRaises(SimConfigError):
            SimConfig(2, 100, 0.001, (1.0, 1.0), embedded=(EmbedSpec(Episode((0, 5)), ticks=(1,)),))
        with self.assertRaises(SimConfigError):
            SimConfig(2, 100, 0.001, (1.0, 1.0), embedded=(EmbedSpec(Episode((0, 1)), 5, ticks=(97,)),))
        with self.assertRaises(SimConfigError):
            EmbedSpec(Episode((0, 1)), ticks=(1,), instances=3)

    def test_rate_schedule_must_start_at_zero(self):
        with self.assertRaises(SimConfigError):
            SimConfig(1, 100, 0.001, ((RateSegment(10, 1.0),),))

    def test_parse_yaml(self):
        config = parse_sim_config(
            "num_neurons: 3\n"
            "length_ticks: 1000\n"
            "delta_t: 0.001\n"
            "base_rates: 5\n"
            "seed: 7\n"
            "embedded:\n"
            "  - pattern: [2, 0]\n"
            "    jitter_span: 2\n"
            "    ticks: [10, 20]\n"
            "connections:\n"
            "  - {source: 0, target: 1, delay: 2, probability: 0.5}\n"
        )
        self.assertEqual(config.base_rates, (5.0, 5.0, 5.0))
        self.assertEqual(config.embedded[0].pattern, Episode((0, 2)))
        self.assertEqual(config.embedded[0].ticks, (10, 20))
        self.assertEqual(config.connections[0], Connection(0, 1, 2, 0.5))
        self.assertEqual(config.seed, 7)

    def test_parse_key_value_lines(self):
        config = parse_sim_config(
            "# null run\n"
            "num_neurons=2\n"
            "length_ticks=500\n"
            "delta_t=0.001\n"
            "base_rates=[5, [{from_tick: 0, rate_hz: 1}, {from_tick: 100, rate_hz: 8}]]\n",
            seed=3,
        )
        self.assertEqual(config.base_rates[0], 5.0)
        self.assertEqual(config.base_rates[1], (RateSegment(0, 1.0), RateSegment(100, 8.0)))
        self.assertEqual(config.seed, 3)

    def test_parse_errors(self):
        with self.assertRaisesMessage(SimConfigError, 'num_neurons'):
            parse_sim_config("length_ticks: 10\ndelta_t: 0.001\nbase_rates: 1\n")
        with self.assertRaisesMessage(SimConfigError, 'outside [0, 1]'):
            parse_sim_config("num_neurons: 1\nlength_ticks: 10\ndelta_t: 0.001\nbase_rates: 5000\n")
        with self.assertRaisesMessage(SimConfigError, 'exactly one of'):
            parse_sim_config(
                "num_neurons: 2\nlength_ticks: 10\ndelta_t: 0.001\nbase_rates: 1\n"
                "embedded:\n  - pattern: [0, 1]\n"
            )
        with self.assertRaisesMessage(SimConfigError, 'line 2'):
            parse_sim_config("num_neurons=2\nlength_ticks\n")


class SimulateCommandTests(SimpleTestCase):

    def run_simulate(self, config_text, *args, **options):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        config_path = Path(tmp.name) / 'sim.yaml'
        config_path.write_text(config_text)
        output = Path(tmp.name) / 'spikes.csv'
        call_command('simulate', str(config_path), *args, output=str(output), stdout=io.StringIO(), **options)
        return output

    def test_zero_rates_write_headers_only(self):
        output = self.run_simulate("num_neurons: 4\nlength_ticks: 1000\ndelta_t: 0.001\nbase_rates: 0\n")
        lines = output.read_text().splitlines()
        self.assertTrue(all(line.startswith('#') for line in lines))
        self.assertEqual(truth_path(output).read_text(), 'pattern_types\tanchor_tick\n')

    def test_same_seed_same_bytes(self):
        text = (
            "num_neurons: 5\nlength_ticks: 5000\ndelta_t: 0.001\nbase_rates: 10\n"
            "embedded:\n  - {pattern: [0, 1, 2], jitter_span: 3, instances: 20}\n"
        )
        first = self.run_simulate(text, seed=11)
        second = self.run_simulate(text, seed=11)
        self.assertEqual(first.read_bytes(), second.read_bytes())
        self.assertEqual(truth_path(first).read_bytes(), truth_path(second).read_bytes())

    def test_null_regime_spike_count(self):
        output = self.run_simulate(
            "num_neurons: 20\nlength_ticks: 50000\ndelta_t: 0.001\nbase_rates: 5\n", seed=2
        )
        seq = load_spike_file(output, 0.001)
        sigma = math.sqrt(20 * 50_000 * 0.005 * 0.995)
        self.assertLess(abs(len(seq) - 5000), 4 * sigma)
        self.assertEqual(seq.length_ticks, 50_000)

    def test_invalid_config_exits_with_usage_code(self):
        with self.assertRaises(CommandError) as raised:
            self.run_simulate("num_neurons: 1\nlength_ticks: 10\ndelta_t: 0.001\nbase_rates: 5000\n")
        self.assertEqual(raised.exception.returncode, 2)

    def test_missing_config(self):
        with self.assertRaises(CommandError) as raised:
            call_command('simulate', '/nonexistent/sim.yaml', output='/tmp/unused.csv')
        self.assertEqual(raised.exception.returncode, 2)


class NullCalibrationTests(SimpleTestCase):
    """Counts of a fixed pair on independent data against the analytic null."""

    PAIR = Episode((0, 1))

    def pair_counts(self, runs, num_neurons, strict):
        counts = []
        for seed in range(runs):
            seq = generate(background(num_neurons=num_neurons, seed=seed))
            counts.append(count_nonoverlapped(seq, [self.PAIR], 5, strict=strict)[self.PAIR])
        return np.array(counts)

    def assert_matches_null(self, runs, num_neurons):
        counts = self.pair_counts(runs, num_neurons, strict=True)
        F = expected_frequency(50_000, 5, anchored_probability([0.005, 0.005], 5))
        standard_error = counts.std(ddof=1) / math.sqrt(runs)
        self.assertLess(abs(counts.mean() - F), 3 * standard_error)

    def test_strict_counts_match_expected_frequency(self):
        self.assert_matches_null(runs=30, num_neurons=2)

    def test_inclusive_counts_sit_above_the_strict_null(self):
        inclusive = self.pair_counts(20, 2, strict=False)
        strict = self.pair_counts(20, 2, strict=True)
        self.assertGreater(inclusive.mean(), strict.mean())

    @tag('slow')
    def test_null_regime_calibration(self):
        self.assert_matches_null(runs=100, num_neurons=20)

    @tag('slow')
    def test_preregistered_pair_rarely_significant(self):
        runs, epsilon = 100, 0.05
        hits = 0
        for seed in range(runs):
            seq = generate(background(seed=1000 + seed))
            count = count_nonoverlapped(seq, [self.PAIR], 5)[self.PAIR]
            hits += count >= episode_threshold(seq, self.PAIR, 5, epsilon)
        self.assertLessEqual(hits / runs, epsilon + 3 * math.sqrt(epsilon * (1 - epsilon) / runs))


class RecoveryTests(SimpleTestCase):
    """Mining simulated data with embedded synchronous patterns."""

    def recovered(self, config):
        seq = generate(config)
        report = mine_levels(seq, MiningConfig(expiry=5, epsilon=0.05))
        found = report.episodes()
        return all(spec.pattern in found for spec in config.embedded), report

    def test_patterns_recovered(self):
        for seed in range(3):
            found, _ = self.recovered(with_patterns([3, 5, 7], seed=seed))
            self.assertTrue(found)

    def test_four_node_pattern_recovered(self):
        found, report = self.recovered(with_patterns([4], instances=200, seed=21))
        self.assertTrue(found)
        self.assertLessEqual(max(item.episode.n for item in report.frequent), 4)

    def test_candidate_pruning(self):
        _, report = self.recovered(with_patterns([5], num_neurons=40, seed=6))
        self.assertLess(report.candidates_at(3), 0.01 * math.comb(40, 3))

    @tag('slow')
    def test_patterns_recovered_in_most_runs(self):
        recovered = sum(self.recovered(with_patterns([3, 5, 7], seed=100 + run))[0] for run in range(100))
        self.assertGreaterEqual(recovered, 95)
