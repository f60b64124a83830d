import io
import json
import tempfile
from itertools import combinations
from pathlib import Path

import numpy as np
from django.core.management import CommandError, call_command
from django.test import SimpleTestCase, tag

from simulator.services import SimConfig, generate
from spikes.samples import A, B, C, D, E, WORKED_EXAMPLE_FILE, worked_example
from spikes.services import Event, EventSequence, write_spike_file

from .services import (
    CandidateSizeError,
    Episode,
    EpisodeError,
    FixedThreshold,
    MiningConfig,
    count_nonoverlapped,
    generate_candidates,
    mine,
    mine_levels,
    occurrence_windows,
)


def greedy_scan(seq, types, expiry):
    """Reference counter: walk the events once, remembering the last tick of each wanted type."""
    wanted = set(types)
    last_seen = {}
    total = 0
    for event in seq.events:
        if event.etype not in wanted:
            continue
        last_seen[event.etype] = event.tick
        if len(last_seen) == len(wanted):
            ticks = list(last_seen.values())
            if max(ticks) - min(ticks) <= expiry:
                total += 1
                last_seen.clear()
    return total


def random_sequence(rng, num_types=5):
    length = int(rng.integers(20, 501))
    density = rng.uniform(0.01, 0.2)
    size = min(int(rng.poisson(density * length)), 500)
    ticks = rng.integers(0, length + 1, size=size)
    etypes = rng.integers(0, num_types, size=size)
    events = [Event(int(t), int(e)) for t, e in zip(ticks, etypes)]
    return EventSequence.from_events(events, 0.001, length, num_types)


class EpisodeTests(SimpleTestCase):

    def test_canonical_form(self):
        self.assertEqual(Episode.of(C, A, B), Episode((A, B, C)))
        self.assertEqual(Episode.of(B, A).n, 2)

    def test_repeated_types_rejected(self):
        with self.assertRaises(EpisodeError):
            Episode.of(A, A)
        with self.assertRaises(EpisodeError):
            Episode((B, A))

    def test_labels(self):
        self.assertEqual(Episode.of(A, B, C).label(worked_example()), 'A,B,C')
        self.assertEqual(Episode.of(A, C).label(), '0,2')

    def test_config_validation(self):
        with self.assertRaises(EpisodeError):
            MiningConfig(expiry=0)
        with self.assertRaises(EpisodeError):
            MiningConfig(expiry=5, threshold=0)
        self.assertTrue(MiningConfig(expiry=5).is_auto)


class CountNonOverlappedTests(SimpleTestCase):

    def setUp(self):
        self.seq = worked_example()

    def test_worked_example_triple(self):
        counts = count_nonoverlapped(self.seq, [Episode.of(A, B, C)], 5)
        self.assertEqual(counts[Episode.of(A, B, C)], 1)

    def test_singleton_is_event_count(self):
        for expiry in (1, 5, 30):
            self.assertEqual(count_nonoverlapped(self.seq, [Episode.of(A)], expiry)[Episode.of(A)], 3)

    def test_pair_with_tight_expiry(self):
        self.assertEqual(count_nonoverlapped(self.seq, [Episode.of(B, C)], 1)[Episode.of(B, C)], 1)

    def test_inclusive_span_versus_strict(self):
        seq = EventSequence.from_events([Event(0, 0), Event(5, 1)], 1.0)
        pair = Episode.of(0, 1)
        self.assertEqual(count_nonoverlapped(seq, [pair], 5)[pair], 1)
        self.assertEqual(count_nonoverlapped(seq, [pair], 5, strict=True)[pair], 0)

    def test_mixed_sizes_rejected(self):
        with self.assertRaises(CandidateSizeError):
            count_nonoverlapped(self.seq, [Episode.of(A), Episode.of(A, B)], 5)

    def test_bad_expiry_rejected(self):
        with self.assertRaises(EpisodeError):
            count_nonoverlapped(self.seq, [Episode.of(A)], 0)

    def test_matches_reference_scanner(self):
        rng = np.random.default_rng(2024)
        mismatches = 0
        for _ in range(200):
            seq = random_sequence(rng)
            expiry = int(rng.integers(1, 11))
            for size in (1, 2, 3):
                episodes = [Episode(types) for types in combinations(range(5), size)]
                counts = count_nonoverlapped(seq, episodes, expiry)
                for ep in episodes:
                    if counts[ep] != greedy_scan(seq, ep.types, expiry):
                        mismatches += 1
        self.assertEqual(mismatches, 0)

    def test_one_pass_equals_separate_passes(self):
        rng = np.random.default_rng(5)
        seq = random_sequence(rng)
        episodes = [Episode(types) for types in combinations(range(5), 2)]
        together = count_nonoverlapped(seq, episodes, 4)
        for ep in episodes:
            self.assertEqual(together[ep], count_nonoverlapped(seq, [ep], 4)[ep])

    def test_occurrence_windows_never_share_events(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            seq = random_sequence(rng)
            for types in combinations(range(5), 3):
                windows = occurrence_windows(seq, Episode(types), 6)
                used = [index for window in windows for index in window]
                self.assertEqual(len(used), len(set(used)))
                for window in windows:
                    ticks = [seq.events[i].tick for i in window]
                    self.assertLessEqual(max(ticks) - min(ticks), 6)
                    self.assertEqual(sorted(seq.events[i].etype for i in window), list(types))

    def test_deterministic(self):
        episodes = [Episode(types) for types in combinations(range(5), 2)]
        self.assertEqual(count_nonoverlapped(self.seq, episodes, 3), count_nonoverlapped(self.seq, episodes, 3))


class GenerateCandidatesTests(SimpleTestCase):

    def test_all_pairs_from_singletons(self):
        frequent = {Episode.of(A), Episode.of(B), Episode.of(C)}
        self.assertEqual(generate_candidates(frequent), {Episode.of(A, B), Episode.of(A, C), Episode.of(B, C)})

    def test_join_with_full_subepisode_check(self):
        frequent = {Episode.of(A, B), Episode.of(A, C), Episode.of(B, C)}
        self.assertEqual(generate_candidates(frequent), {Episode.of(A, B, C)})

    def test_prunes_when_subepisode_missing(self):
        self.assertEqual(generate_candidates({Episode.of(A, B), Episode.of(A, C)}), set())

    def test_empty(self):
        self.assertEqual(generate_candidates(set()), set())


class MineTests(SimpleTestCase):

    def test_empty_sequence(self):
        seq = EventSequence.from_events([], 0.001, length_ticks=100, num_types=4)
        self.assertEqual(mine(seq, MiningConfig(expiry=5, threshold=1)), [])

    def test_worked_example_with_unit_threshold(self):
        seq = worked_example()
        found = dict(mine(seq, MiningConfig(expiry=5, max_level=3), threshold_fn=lambda size: 1))
        self.assertEqual(found[Episode.of(A, B, C)], 1)

        # level-wise brute force over every episode of size 1-3
        expected = {}
        frequent_below = {Episode.of(t) for t in range(5) if greedy_scan(seq, (t,), 5) >= 1}
        expected.update({ep: greedy_scan(seq, ep.types, 5) for ep in frequent_below})
        for size in (2, 3):
            level = set()
            for types in combinations(range(5), size):
                ep = Episode(types)
                if all(sub in frequent_below for sub in ep.subepisodes()) and greedy_scan(seq, types, 5) >= 1:
                    level.add(ep)
                    expected[ep] = greedy_scan(seq, types, 5)
            frequent_below = level
        self.assertEqual(found, expected)

    def test_reported_episodes_have_frequent_subepisodes(self):
        rng = np.random.default_rng(3)
        seq = random_sequence(rng)
        report = mine_levels(seq, MiningConfig(expiry=8, threshold=2))
        reported = report.episodes()
        for ep in reported:
            for sub in ep.subepisodes():
                self.assertIn(sub, reported)

    def test_max_level_caps_search(self):
        report = mine_levels(worked_example(), MiningConfig(expiry=5, threshold=1, max_level=1))
        self.assertEqual({item.episode.n for item in report.frequent}, {1})
        self.assertEqual([stats.level for stats in report.levels], [1])

    def test_fixed_policy_reports_threshold(self):
        report = mine_levels(worked_example(), MiningConfig(expiry=5, threshold=2), FixedThreshold(2))
        for item in report.frequent:
            self.assertEqual(item.threshold, 2)
            self.assertGreaterEqual(item.count, 2)

    def test_singleton_counts_match_event_counts(self):
        seq = worked_example()
        found = dict(mine(seq, MiningConfig(expiry=5, threshold=1, max_level=1)))
        counts = seq.counts()
        self.assertEqual(found, {Episode.of(t): int(counts[t]) for t in (A, B, C, D, E)})


class MineCommandTests(SimpleTestCase):

    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.dir = Path(tmp.name)
        self.example = self.dir / 'example.csv'
        self.example.write_text(WORKED_EXAMPLE_FILE)

    def mine(self, *args):
        out = io.StringIO()
        call_command('mine', *[str(a) for a in args], stdout=out)
        return out.getvalue()

    def test_worked_example_triple_row(self):
        output = self.mine(self.example, '--delta-t', 1, '--expiry', 5, '--threshold', 1, '--max-level', 3)
        lines = output.splitlines()
        self.assertEqual(lines[0], 'episode\tsize\tcount\tthreshold_used')
        self.assertIn('A,B,C\t3\t1\t1', lines)
        sizes = [int(line.split('\t')[1]) for line in lines[1:]]
        self.assertEqual(sizes, sorted(sizes, reverse=True))

    def test_singletons_list_event_counts(self):
        output = self.mine(self.example, '--delta-t', 1, '--expiry', 5, '--threshold', 1, '--max-level', 1)
        rows = [line.split('\t') for line in output.splitlines()[1:]]
        self.assertEqual(
            rows,
            [['A', '1', '3', '1'], ['B', '1', '3', '1'], ['C', '1', '3', '1'],
             ['D', '1', '1', '1'], ['E', '1', '1', '1']],
        )

    def test_json_format(self):
        output = self.mine(self.example, '--delta-t', 1, '--expiry', 5, '--threshold', 1, '--format', 'json')
        rows = json.loads(output)
        self.assertIn({'episode': 'A,B,C', 'size': 3, 'count': 1, 'threshold_used': 1}, rows)

    def test_missing_file(self):
        with self.assertRaises(CommandError) as raised:
            self.mine(self.dir / 'missing.csv', '--expiry', 5)
        self.assertEqual(raised.exception.returncode, 2)

    def test_malformed_file(self):
        bad = self.dir / 'bad.csv'
        bad.write_text('0.001,1\nnot a record\n')
        with self.assertRaises(CommandError) as raised:
            self.mine(bad, '--expiry', 5)
        self.assertEqual(raised.exception.returncode, 2)
        self.assertIn('line 2', str(raised.exception))

    def test_levels_table(self):
        output = self.mine(self.example, '--delta-t', 1, '--expiry', 5, '--threshold', 1, '--max-level', 2, '--levels')
        lines = output.splitlines()
        self.assertEqual(lines[0], 'level\tcandidates\tfrequent\tmin_threshold\tmax_threshold')
        self.assertEqual([line.split('\t')[:3] for line in lines[1:]], [['1', '5', '5'], ['2', '10', '9']])

    def test_dense_file_with_automatic_threshold(self):
        dense = self.dir / 'dense.csv'
        dense.write_text(''.join(f"{tick},{etype}\n" for tick in range(0, 200, 2) for etype in range(3)))
        output = self.mine(dense, '--delta-t', 1, '--expiry', 5, '--epsilon', 0.05)
        sizes = {int(line.split('\t')[1]) for line in output.splitlines()[1:]}
        self.assertEqual(sizes, {1, 2, 3})

    @tag('slow')
    def test_null_data_rarely_reports_large_episodes(self):
        quiet_runs = 0
        for seed in range(20):
            path = self.dir / f'null{seed}.csv'
            write_spike_file(generate(SimConfig(20, 50_000, 0.001, (5.0,) * 20, seed=seed)), path)
            output = self.mine(path, '--expiry', 5, '--epsilon', 0.05)
            sizes = [int(line.split('\t')[1]) for line in output.splitlines()[1:]]
            quiet_runs += all(size < 3 for size in sizes)
        self.assertGreaterEqual(quiet_runs, 15)
