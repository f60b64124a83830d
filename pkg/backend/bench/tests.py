import io
import tempfile
from pathlib import Path

from django.core.management import CommandError, call_command
from django.test import SimpleTestCase, TestCase, tag

from baseline.services import SurrogateConfig
from episodes.services import Episode

from .models import BenchReportRecord
from .services import BenchGridError, BenchPoint, BenchReport, BenchRow, embedding_plan, run_bench, score

SMALL = BenchPoint(num_neurons=6, length_ticks=20_000)
FEW_SURROGATES = SurrogateConfig(n_surrogates=5, n_trials=4)


def small_bench(**overrides):
    options = dict(
        vary='length', values=[10_000, 20_000], runs=2, baseline_runs=1, embed_sizes=[3],
        instances=40, seed=5, base=SMALL, surrogates=FEW_SURROGATES, baseline_max_size=3,
    )
    options.update(overrides)
    return run_bench(**options)


class ScoreTests(SimpleTestCase):

    def test_subsets_of_embedded_patterns_are_not_false_positives(self):
        truth = [Episode((0, 1, 2))]
        found = [Episode((0,)), Episode((0, 1)), Episode((0, 1, 2)), Episode((0, 5))]
        result = score(found, truth)
        self.assertEqual((result.reported, result.false_positives, result.recovered, result.embedded), (3, 1, 1, 1))
        self.assertAlmostEqual(result.fpr, 1 / 3)
        self.assertEqual(result.recall, 1.0)

    def test_partial_pattern_is_not_recovered(self):
        result = score([Episode((0, 1))], [Episode((0, 1, 2))])
        self.assertEqual(result.recall, 0.0)
        self.assertEqual(result.fpr, 0.0)

    def test_empty_denominators(self):
        result = score([], [])
        self.assertIsNone(result.fpr)
        self.assertIsNone(result.recall)


class GridTests(SimpleTestCase):

    def test_embedding_plan_uses_disjoint_neurons(self):
        specs = embedding_plan(BenchPoint(), (3, 5, 7), 150)
        self.assertEqual([spec.pattern.types for spec in specs],
                         [(0, 1, 2), (3, 4, 5, 6, 7), tuple(range(8, 15))])
        self.assertTrue(all(spec.jitter_span <= 5 and spec.instances == 150 for spec in specs))

    def test_jitter_never_exceeds_expiry(self):
        specs = embedding_plan(BenchPoint(expiry=2), (3,), 10)
        self.assertEqual(specs[0].jitter_span, 2)

    def test_invalid_grids(self):
        with self.assertRaises(BenchGridError):
            small_bench(vary='delay')
        with self.assertRaises(BenchGridError):
            small_bench(values=[])
        with self.assertRaises(BenchGridError):
            small_bench(vary='neurons', values=[2])
        with self.assertRaises(BenchGridError):
            small_bench(vary='neurons', values=[6.5])
        with self.assertRaises(BenchGridError):
            small_bench(methods=['pe', 'other'])
        with self.assertRaises(BenchGridError):
            small_bench(vary='rate', values=[5000])


class RunBenchTests(SimpleTestCase):

    def test_rows_per_value_and_method(self):
        report = small_bench()
        self.assertEqual([(row.value, row.method) for row in report.rows], [
            (10_000.0, 'pe'), (10_000.0, 'baseline'), (20_000.0, 'pe'), (20_000.0, 'baseline'),
        ])
        for row in report.rows:
            self.assertGreaterEqual(row.runtime_s, 0)
            self.assertEqual(row.embedded, row.runs)
            if row.fpr is not None:
                self.assertTrue(0 <= row.fpr <= 1)
            self.assertTrue(0 <= row.recall <= 1)
        self.assertEqual([row.runs for row in report.rows], [2, 1, 2, 1])

    def test_miner_recovers_embedded_pattern(self):
        report = small_bench(methods=['pe'], values=[20_000])
        self.assertEqual(report.rows[0].recall, 1.0)

    def test_no_embedded_patterns_gives_undefined_recall(self):
        report = small_bench(methods=['pe'], embed_sizes=[], values=[20_000])
        row = report.rows[0]
        self.assertEqual(row.embedded, 0)
        self.assertIsNone(row.recall)

    def test_same_seed_same_scores(self):
        first = small_bench(methods=['pe'])
        second = small_bench(methods=['pe'])
        self.assertEqual(
            [(r.found, r.fpr, r.recall) for r in first.rows],
            [(r.found, r.fpr, r.recall) for r in second.rows],
        )

    def test_tsv_round_trip(self):
        report = small_bench(methods=['pe'], embed_sizes=[])
        restored = BenchReport.from_tsv(report.to_tsv())
        self.assertEqual(restored.vary, report.vary)
        self.assertEqual(restored.rows, report.rows)

    def test_from_tsv_rejects_other_tables(self):
        with self.assertRaises(BenchGridError):
            BenchReport.from_tsv('episode\tsize\tcount\tthreshold_used\n')

    def test_summary_layout(self):
        report = BenchReport('expiry', rows=[
            BenchRow(3.0, 'pe', 10, 0.25, 0.5, 4, 10, 1.0),
            BenchRow(3.0, 'baseline', 2, 12.5, None, 0, 2, 0.0),
        ])
        header, line = report.summary().splitlines()
        self.assertIn('PE time', header)
        self.assertEqual(line.split(), ['3', '0.250', '12.500', '50%', 'n/a'])

    @tag('slow')
    def test_expiry_trend(self):
        report = small_bench(
            vary='expiry', values=[3, 5, 8, 10], runs=5, baseline_runs=2, base=BenchPoint(),
            embed_sizes=[3, 5], instances=150, baseline_max_size=None,
        )
        pe = [row.runtime_s for row in report.rows if row.method == 'pe']
        baseline = [row.runtime_s for row in report.rows if row.method == 'baseline']
        self.assertLess(max(pe) / min(pe), 2.0)
        self.assertEqual(baseline, sorted(baseline))

    @tag('slow')
    def test_neuron_trend(self):
        report = small_bench(
            vary='neurons', values=[20, 30, 40], runs=3, baseline_runs=1, base=BenchPoint(),
            embed_sizes=[3, 5, 7], instances=150, surrogates=SurrogateConfig(), baseline_max_size=3,
        )
        pe = [row.runtime_s for row in report.rows if row.method == 'pe']
        baseline = [row.runtime_s for row in report.rows if row.method == 'baseline']
        self.assertLess(max(pe) / min(pe), 2.0)
        self.assertEqual(baseline, sorted(set(baseline)))
        self.assertGreater(baseline[2] / baseline[0], 40 / 20)

    @tag('slow')
    def test_length_trend(self):
        report = small_bench(
            vary='length', values=[50_000, 100_000, 200_000], runs=3, baseline_runs=1, base=BenchPoint(),
            embed_sizes=[3, 5, 7], instances=150, surrogates=SurrogateConfig(), baseline_max_size=3,
        )
        pe = [row.runtime_s for row in report.rows if row.method == 'pe']
        baseline = [row.runtime_s for row in report.rows if row.method == 'baseline']
        self.assertEqual(pe, sorted(pe))
        self.assertEqual(baseline, sorted(baseline))
        for pe_time, baseline_time in zip(pe, baseline):
            self.assertGreaterEqual(baseline_time, 10 * pe_time)


class BenchCommandTests(TestCase):

    def bench(self, *args):
        out = io.StringIO()
        call_command('bench', *[str(a) for a in args], stdout=out, stderr=io.StringIO())
        return out.getvalue()

    def grid_args(self):
        return [
            '--vary', 'neurons', '6', '--runs', '2', '--baseline-runs', '1', '--embed-sizes', '3',
            '--instances', '40', '--surrogates', '4', '--trials', '4', '--baseline-max-size', '3', '--seed', '3',
        ]

    def test_prints_tsv_rows(self):
        output = self.bench(*self.grid_args(), '--methods', 'pe')
        report = BenchReport.from_tsv(output)
        self.assertEqual(report.vary, 'neurons')
        self.assertEqual([(row.value, row.method, row.runs) for row in report.rows], [(6.0, 'pe', 2)])

    def test_save_list_and_show(self):
        output = self.bench(*self.grid_args(), '--save')
        self.assertEqual(BenchReportRecord.objects.count(), 1)
        record = BenchReportRecord.objects.get()
        self.assertEqual(record.rows.count(), 2)
        self.assertEqual(record.parameters['embed_sizes'], [3])

        listing = self.bench('--list').splitlines()
        self.assertEqual(listing[0], 'id\tvary\tseed\tcreated_at\trow_count')
        self.assertTrue(listing[1].startswith(f"{record.id}\tneurons\t3\t"))

        shown = self.bench('--show', record.id)
        self.assertEqual(BenchReport.from_tsv(shown).rows, BenchReport.from_tsv(output).rows)

    def test_record_round_trip(self):
        report = small_bench(methods=['pe'], values=[10_000])
        restored = BenchReportRecord.from_report(report).to_report()
        self.assertEqual(restored.rows, report.rows)
        self.assertEqual(restored.vary, 'length')

    def test_baseline_pattern_size_capped_by_default(self):
        args = ['--vary', 'neurons', '6', '--runs', '1', '--baseline-runs', '1', '--embed-sizes', '3',
                '--instances', '40', '--surrogates', '4', '--trials', '4', '--seed', '3', '--save']
        self.bench(*args)
        self.bench(*args, '--baseline-max-size', 0)
        capped, unbounded = BenchReportRecord.objects.order_by('id')
        self.assertEqual(capped.parameters['baseline_max_size'], 3)
        self.assertIsNone(unbounded.parameters['baseline_max_size'])

    def test_output_file_and_summary(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'bench.tsv'
            summary = self.bench(*self.grid_args(), '--methods', 'pe', '--output', path, '--summary')
            self.assertEqual(BenchReport.from_tsv(path.read_text()).rows[0].method, 'pe')
        self.assertIn('PE time', summary)

    def test_invalid_grid_exits_with_usage_code(self):
        for args in (['--vary', 'delay', '3'], ['--vary', 'expiry'], ['--vary', 'expiry', 'x'],
                     ['--vary', 'neurons', '2', '--embed-sizes', '3']):
            with self.assertRaises(CommandError) as raised:
                self.bench(*args)
            self.assertEqual(raised.exception.returncode, 2)

    def test_show_unknown_report(self):
        with self.assertRaises(CommandError) as raised:
            self.bench('--show', 999)
        self.assertEqual(raised.exception.returncode, 2)
