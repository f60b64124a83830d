import logging

from django.core.management.base import BaseCommand, CommandError

from baseline.serializers import PatternResultSerializer
from baseline.services import SurrogateConfig, run_baseline, significant_by_size
from core.output import OutputFormat, render
from spikes.services import load_spike_file

logger = logging.getLogger(__name__)

COLUMNS = ('pattern', 'size', 'observed_mean', 'quantile', 'significant')


class Command(BaseCommand):
    help = (
        "All-occurrence surrogate baseline: count every pattern that occurs at least once, "
        "compare its trial-mean count with jittered surrogates and print the significant ones."
    )

    def add_arguments(self, parser):
        parser.add_argument('input', help="Spike file: 'timestamp,event_id' records")
        parser.add_argument('--expiry', type=int, required=True, help="Expiry time T in ticks")
        parser.add_argument('--delta-t', type=float, default=0.001, help="Seconds per tick (default 0.001)")
        parser.add_argument('--surrogates', type=int, help="Jittered copies per trial")
        parser.add_argument('--jitter', type=int, help="Jitter window J in ticks (default 2T)")
        parser.add_argument('--trials', type=int, help="Number of trials the data is split into")
        parser.add_argument('--alpha', type=float, help="Significance level")
        parser.add_argument('--max-size', type=int, help="Largest pattern size to test")
        parser.add_argument('--type-cap', type=int, help="Most distinct types a window may hold without --max-size")
        parser.add_argument('--seed', type=int)
        parser.add_argument('--all', action='store_true', help="Also print patterns that are not significant")
        parser.add_argument('--format', choices=OutputFormat.CHOICES, default=OutputFormat.TSV)

    def handle(self, *args, **options):
        try:
            cfg = SurrogateConfig.from_settings(
                n_surrogates=options['surrogates'],
                jitter_window=options['jitter'],
                n_trials=options['trials'],
                alpha=options['alpha'],
                seed=options['seed'],
            )
            seq = load_spike_file(options['input'], options['delta_t'])
            report = run_baseline(seq, options['expiry'], cfg, options['max_size'], options['type_cap'])
        except OSError as e:
            raise CommandError(f"Cannot read {options['input']}: {e.strerror or e}", returncode=2)
        except ValueError as e:
            raise CommandError(str(e), returncode=2)

        logger.info(f"Significant patterns by size: {significant_by_size(report)}")
        results = report.results if options['all'] else report.significant()
        results = sorted(results, key=lambda r: (-r.pattern.n, -r.observed_mean, r.pattern.types))
        rows = PatternResultSerializer(results, many=True, context={'seq': seq})
        self.stdout.write(render(COLUMNS, rows.data, options['format']), ending='')
