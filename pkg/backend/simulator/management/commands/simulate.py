import logging

from django.core.management.base import BaseCommand, CommandError

from spikes.services import write_spike_file
from simulator.serializers import read_sim_config
from simulator.services import embed_truth, generate, truth_path, write_truth_file

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Generate a synthetic spike file (and a <output>.truth.tsv sidecar) from a simulator config."

    def add_arguments(self, parser):
        parser.add_argument('config', help="YAML or key=value simulator config")
        parser.add_argument('--output', '-o', required=True, help="Spike file to write")
        parser.add_argument('--seed', type=int, default=None, help="Overrides the seed in the config")

    def handle(self, *args, **options):
        try:
            config = read_sim_config(options['config'], seed=options['seed'])
        except OSError as e:
            raise CommandError(f"Cannot read config: {e}", returncode=2)
        except ValueError as e:
            raise CommandError(f"Invalid config: {e}", returncode=2)

        seq = generate(config)
        truth = embed_truth(config)
        try:
            write_spike_file(seq, options['output'])
            write_truth_file(truth, truth_path(options['output']))
        except OSError as e:
            raise CommandError(f"Cannot write output: {e}", returncode=2)

        embedded = sum(len(anchors) for _, anchors in truth)
        self.stdout.write(
            f"Wrote {len(seq)} spikes ({embedded} embedded pattern instances) to {options['output']}"
        )
