from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from baseline.services import SurrogateConfig
from bench.models import BenchReportRecord
from bench.serializers import BenchReportDetailSerializer, BenchReportListSerializer, BenchRowSerializer
from bench.services import BENCH_COLUMNS, BenchDefaults, BenchReport, run_bench
from core.output import OutputFormat, render, render_json

LIST_COLUMNS = ('id', 'vary', 'seed', 'created_at', 'row_count')


class Command(BaseCommand):
    help = (
        "Benchmark the episode miner against the surrogate baseline over a parameter sweep, "
        "e.g. --vary expiry 3 5 8 10. Prints one TSV row per grid value and method."
    )

    def add_arguments(self, parser):
        parser.add_argument('--vary', nargs='+', metavar='PARAM_OR_VALUE',
                            help=f"Parameter ({'|'.join(BenchDefaults.VARY)}) followed by its grid values")
        parser.add_argument('--runs', type=int, default=BenchDefaults.PE_RUNS, help="Miner runs per grid value")
        parser.add_argument('--baseline-runs', type=int, default=BenchDefaults.BASELINE_RUNS,
                            help="Baseline runs per grid value")
        parser.add_argument('--methods', nargs='+', choices=BenchDefaults.METHODS, default=list(BenchDefaults.METHODS))
        parser.add_argument('--epsilon', type=float, help="Type-I error bound for the miner's threshold")
        parser.add_argument('--embed-sizes', nargs='*', type=int, default=list(BenchDefaults.EMBED_SIZES),
                            help="Sizes of the embedded patterns (none for null data)")
        parser.add_argument('--instances', type=int, default=BenchDefaults.INSTANCES,
                            help="Instances of every embedded pattern")
        parser.add_argument('--surrogates', type=int, help="Baseline surrogates per trial")
        parser.add_argument('--trials', type=int, help="Baseline trials")
        parser.add_argument('--jitter', type=int, help="Baseline jitter window in ticks (default 2T)")
        parser.add_argument(
            '--baseline-max-size', type=int, default=BenchDefaults.BASELINE_MAX_SIZE,
            help=(
                f"Largest pattern the baseline tests (default {BenchDefaults.BASELINE_MAX_SIZE}; 0 for no limit). "
                "Without a limit the baseline tests every subset of every window, which takes hours at 20+ neurons; "
                "larger embedded patterns then count as missed for the baseline."
            ),
        )
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--format', choices=OutputFormat.CHOICES, default=OutputFormat.TSV)
        parser.add_argument('--summary', action='store_true', help="Print the table layout instead of rows")
        parser.add_argument('--output', help="Also write the rows to this file")
        parser.add_argument('--save', action='store_true', help="Store the report in the database")
        parser.add_argument('--list', action='store_true', help="List saved reports and exit")
        parser.add_argument('--show', type=int, metavar='ID', help="Print a saved report and exit")

    def handle(self, *args, **options):
        if options['list']:
            return self.list_reports(options['format'])
        if options['show'] is not None:
            return self.show_report(options['show'], options)

        vary, values = self.parse_grid(options['vary'])
        epsilon = options['epsilon']
        if epsilon is None:
            epsilon = settings.SYNCHRONY['DEFAULT_EPSILON']
        try:
            surrogates = SurrogateConfig.from_settings(
                n_surrogates=options['surrogates'],
                n_trials=options['trials'],
                jitter_window=options['jitter'],
            )
            report = run_bench(
                vary,
                values,
                runs=options['runs'],
                baseline_runs=options['baseline_runs'],
                methods=options['methods'],
                epsilon=epsilon,
                embed_sizes=options['embed_sizes'],
                instances=options['instances'],
                seed=options['seed'],
                surrogates=surrogates,
                baseline_max_size=options['baseline_max_size'] or None,
            )
        except ValueError as e:
            raise CommandError(str(e), returncode=2)

        if options['save']:
            record = BenchReportRecord.from_report(report)
            self.stderr.write(f"Saved bench report {record.id}")
        self.write_report(report, options)

    def parse_grid(self, tokens):
        if not tokens or len(tokens) < 2:
            raise CommandError("--vary needs a parameter and at least one value", returncode=2)
        vary, *raw = tokens
        if vary not in BenchDefaults.VARY:
            raise CommandError(f"--vary must start with one of {BenchDefaults.VARY}, got {vary!r}", returncode=2)
        try:
            return vary, [float(value) for value in raw]
        except ValueError:
            raise CommandError(f"grid values must be numbers, got {raw}", returncode=2)

    def write_report(self, report: BenchReport, options):
        rows = BenchRowSerializer(report.row_dicts(), many=True).data
        text = render(BENCH_COLUMNS, rows, options['format'])
        if options['output']:
            try:
                Path(options['output']).write_text(text, encoding='utf-8')
            except OSError as e:
                raise CommandError(f"Cannot write {options['output']}: {e}", returncode=2)
        self.stdout.write(report.summary() if options['summary'] else text, ending='')

    def list_reports(self, fmt):
        records = BenchReportListSerializer(BenchReportRecord.objects.all(), many=True).data
        self.stdout.write(render(LIST_COLUMNS, records, fmt), ending='')

    def show_report(self, report_id, options):
        try:
            record = BenchReportRecord.objects.get(pk=report_id)
        except BenchReportRecord.DoesNotExist:
            raise CommandError(f"No saved bench report {report_id}", returncode=2)
        if options['format'] == OutputFormat.JSON and not options['summary']:
            self.stdout.write(render_json(BenchReportDetailSerializer(record).data), ending='')
            return
        self.write_report(record.to_report(), options)
