from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from core.output import OutputFormat, render
from episodes.serializers import FrequentEpisodeSerializer, LevelStatsSerializer, report_order
from episodes.services import MiningConfig, MiningRules, mine_levels
from spikes.services import load_spike_file

COLUMNS = ('episode', 'size', 'count', 'threshold_used')
LEVEL_COLUMNS = ('level', 'candidates', 'frequent', 'min_threshold', 'max_threshold')


class Command(BaseCommand):
    help = (
        "Mine frequent synchronous (parallel) episodes from a spike file. "
        "Without --threshold, each level is gated by the significance threshold at --epsilon."
    )

    def add_arguments(self, parser):
        parser.add_argument('input', help="Spike file: 'timestamp,event_id' records")
        parser.add_argument('--expiry', type=int, required=True, help="Expiry time T in ticks")
        parser.add_argument('--delta-t', type=float, default=0.001, help="Seconds per tick (default 0.001)")
        gate = parser.add_mutually_exclusive_group()
        gate.add_argument('--threshold', type=int, help="Fixed minimum count for every episode")
        gate.add_argument('--epsilon', type=float, help="Type-I error bound for the automatic threshold")
        parser.add_argument('--max-level', type=int, help="Largest episode size to mine")
        parser.add_argument('--strict', action='store_true', help="Require span < T instead of span <= T")
        parser.add_argument('--rate-mode', choices=MiningRules.RATE_MODES, default='product')
        parser.add_argument('--gate-singletons', action='store_true',
                            help="Apply the significance threshold to single event types too")
        parser.add_argument('--levels', action='store_true',
                            help="Print candidate and frequent counts per level instead of the episodes")
        parser.add_argument('--format', choices=OutputFormat.CHOICES, default=OutputFormat.TSV)

    def handle(self, *args, **options):
        epsilon = options['epsilon']
        if epsilon is None:
            epsilon = settings.SYNCHRONY['DEFAULT_EPSILON']
        try:
            config = MiningConfig(
                expiry=options['expiry'],
                threshold=options['threshold'] if options['threshold'] is not None else MiningRules.AUTO,
                max_level=options['max_level'],
                epsilon=epsilon,
                strict=options['strict'],
                rate_mode=options['rate_mode'],
                gate_singletons=options['gate_singletons'],
            )
            seq = load_spike_file(options['input'], options['delta_t'])
            report = mine_levels(seq, config)
        except OSError as e:
            raise CommandError(f"Cannot read {options['input']}: {e.strerror or e}", returncode=2)
        except ValueError as e:
            raise CommandError(str(e), returncode=2)

        if options['levels']:
            rows = LevelStatsSerializer(report.levels, many=True)
            self.stdout.write(render(LEVEL_COLUMNS, rows.data, options['format']), ending='')
            return

        rows = FrequentEpisodeSerializer(sorted(report.frequent, key=report_order), many=True, context={'seq': seq})
        self.stdout.write(render(COLUMNS, rows.data, options['format']), ending='')
