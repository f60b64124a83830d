import io

from django.test import SimpleTestCase

from .samples import A, B, C, worked_example
from .services import (
    Event,
    EventSequence,
    EventType,
    SpikeFileError,
    TrialSplitError,
    UndefinedRateError,
    estimate_rate,
    estimate_rates,
    parse_spike_file,
    serialize_spike_file,
    split_trials,
)


def parse_text(text, delta_t=0.001):
    return parse_spike_file(io.BytesIO(text.encode('utf-8')), delta_t)


def uniform_sequence(length_ticks, per_type, num_types=1, delta_t=0.001):
    events = []
    for type_id, count in enumerate(per_type):
        step = max(length_ticks // max(count, 1), 1)
        events.extend(Event(i * step, type_id) for i in range(count))
    return EventSequence.from_events(events, delta_t, length_ticks, num_types)


class ParseSpikeFileTests(SimpleTestCase):

    def test_quantizes_to_ticks(self):
        seq = parse_text("0.001,0\n0.003,1\n0.006,2\n")
        self.assertEqual(seq.events, (Event(1, 0), Event(3, 1), Event(6, 2)))
        self.assertEqual(seq.length_ticks, 6)
        self.assertEqual(seq.num_types, 3)

    def test_floor_rule(self):
        seq = parse_text("0.0051,0\n")
        self.assertEqual(seq.events[0].tick, 5)

    def test_tab_delimiter_and_comments(self):
        seq = parse_text("# recorded on rig 2\n0.002\t1\n\n0.004\t0\n")
        self.assertEqual(seq.events, (Event(2, 1), Event(4, 0)))

    def test_worked_example_shape(self):
        seq = worked_example()
        self.assertEqual(len(seq), 11)
        self.assertEqual(seq.length_ticks, 19)
        self.assertEqual(seq.num_types, 5)
        self.assertEqual(seq.label_of(A), 'A')
        self.assertEqual(seq.event_type(C), EventType(2, 'C'))

    def test_input_order_not_trusted(self):
        seq = parse_text("0.005,1\n0.005,0\n0.001,2\n")
        self.assertEqual(seq.events, (Event(1, 2), Event(5, 0), Event(5, 1)))

    def test_duration_header_fixes_length(self):
        seq = parse_text("# duration_s=50\n0.001,0\n")
        self.assertEqual(seq.length_ticks, 50000)

    def test_duration_before_last_event_is_rejected(self):
        with self.assertRaises(SpikeFileError):
            parse_text("# duration_s=0.001\n0.5,0\n")

    def test_duplicate_events_kept(self):
        seq = parse_text("0.002,0\n0.002,0\n")
        self.assertEqual(len(seq), 2)

    def test_malformed_line_reports_line_number(self):
        with self.assertRaises(SpikeFileError) as ctx:
            parse_text("0.001,0\nnot a record\n")
        self.assertEqual(ctx.exception.line_number, 2)

    def test_negative_values_rejected(self):
        with self.assertRaises(SpikeFileError):
            parse_text("-0.001,0\n")
        with self.assertRaises(SpikeFileError):
            parse_text("0.001,-1\n")

    def test_unlabelled_id_rejected(self):
        with self.assertRaises(SpikeFileError):
            parse_text("# labels=A,B\n0.001,2\n")

    def test_serialize_round_trip(self):
        original = parse_text("# duration_s=0.02\n# labels=x,y,z\n0.001,0\n0.0035,2\n0.007,1\n0.007,0\n")
        again = parse_text(serialize_spike_file(original))
        self.assertEqual(again, original)

    def test_round_trip_keeps_silent_sources(self):
        seq = EventSequence.from_events([Event(3, 0)], 0.001, length_ticks=10, num_types=4)
        self.assertEqual(parse_text(serialize_spike_file(seq)), seq)


class EstimateRateTests(SimpleTestCase):

    def test_count_over_duration(self):
        seq = uniform_sequence(50000, [250])
        self.assertAlmostEqual(estimate_rate(seq, 0), 5.0)
        self.assertAlmostEqual(estimate_rate(seq, EventType(0)), 5.0)

    def test_high_rate_condition(self):
        seq = uniform_sequence(50000, [500])
        self.assertAlmostEqual(estimate_rate(seq, 0), 10.0)

    def test_silent_source(self):
        seq = uniform_sequence(50000, [250, 0], num_types=2)
        self.assertEqual(estimate_rate(seq, 1), 0.0)

    def test_zero_length_is_undefined(self):
        seq = EventSequence.from_events([Event(0, 0)], 0.001)
        with self.assertRaises(UndefinedRateError):
            estimate_rate(seq, 0)

    def test_rates_vector(self):
        seq = uniform_sequence(1000, [5, 10], num_types=2)
        self.assertEqual(list(estimate_rates(seq)), [5.0, 10.0])


class SplitTrialsTests(SimpleTestCase):

    def test_equal_segments(self):
        trials = split_trials(uniform_sequence(100, [40]), 20)
        self.assertEqual([t.length_ticks for t in trials], [5] * 20)

    def test_last_segment_absorbs_remainder(self):
        trials = split_trials(uniform_sequence(103, [40]), 20)
        self.assertEqual([t.length_ticks for t in trials], [5] * 19 + [8])

    def test_long_recording_into_twenty_trials(self):
        trials = split_trials(uniform_sequence(50000, [250]), 20)
        self.assertEqual({t.length_ticks for t in trials}, {2500})

    def test_partition_and_rebase(self):
        seq = worked_example()
        trials = split_trials(seq, 3)
        self.assertEqual(sum(len(t) for t in trials), len(seq))
        for trial in trials:
            self.assertTrue(all(0 <= e.tick <= trial.length_ticks for e in trial.events))
        # tick 19 (== L) lands in the last trial
        self.assertEqual(trials[-1].events[-1], Event(19 - 12, C))

    def test_rate_weighted_mean_is_invariant(self):
        seq = uniform_sequence(1003, [37, 11], num_types=2)
        trials = split_trials(seq, 7)
        for type_id in (A, B):
            weighted = sum(estimate_rate(t, type_id) * t.length_ticks for t in trials) / seq.length_ticks
            self.assertAlmostEqual(weighted, estimate_rate(seq, type_id))

    def test_too_many_trials(self):
        with self.assertRaises(TrialSplitError):
            split_trials(uniform_sequence(10, [3]), 11)
        with self.assertRaises(TrialSplitError):
            split_trials(uniform_sequence(10, [3]), 0)
