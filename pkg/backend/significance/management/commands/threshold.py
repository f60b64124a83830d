from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from core.output import OutputFormat, render
from significance.serializers import SignificanceResultSerializer
from significance.services import SignificanceParams, evaluate

COLUMNS = ('n', 'rho', 'p', 'F', 'V', 'k', 'threshold', 'min_count')


class Command(BaseCommand):
    help = (
        "Print the significance threshold F + k*sqrt(V) for an n-node synchronous episode under independence. "
        "F and V follow F(L) = (1-p) F(L-1) + p (1 + F(L-T)) and its second-moment companion, "
        "with the recursive term read as F(L-T, T, p) and F = G = 0 for L < T."
    )

    def add_arguments(self, parser):
        parser.add_argument('--L', type=int, required=True, dest='L', help="Data length in ticks")
        parser.add_argument('--T', type=int, required=True, dest='T', help="Expiry time in ticks")
        parser.add_argument('--n', type=int, required=True, help="Episode size")
        parser.add_argument('--rho', type=float, nargs='+', required=True,
                            help="Firing rate in Hz, shared or one per constituent")
        parser.add_argument('--delta-t', type=float, default=0.001, help="Seconds per tick (default 0.001)")
        parser.add_argument('--epsilon', type=float, help="Type-I error bound")
        parser.add_argument('--format', choices=OutputFormat.CHOICES, default=OutputFormat.TSV)

    def handle(self, *args, **options):
        rho = options['rho']
        epsilon = options['epsilon']
        if epsilon is None:
            epsilon = settings.SYNCHRONY['DEFAULT_EPSILON']
        try:
            params = SignificanceParams(
                L=options['L'],
                T=options['T'],
                n=options['n'],
                rho=rho[0] if len(rho) == 1 else tuple(rho),
                delta_t=options['delta_t'],
                epsilon=epsilon,
            )
            result = evaluate(params)
        except ValueError as e:
            raise CommandError(str(e), returncode=2)

        row = SignificanceResultSerializer({
            'n': params.n,
            'rho': ','.join(f"{value:g}" for value in rho),
            'p': result.p,
            'F': result.F,
            'V': result.V,
            'k': result.k,
            'threshold': result.threshold,
            'min_count': result.min_count,
        })
        self.stdout.write(render(COLUMNS, [row.data], options['format']), ending='')
