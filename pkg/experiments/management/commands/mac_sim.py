from experiments.runners import mac_sim_experiment

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Per-class throughput, delay and energy of the cognitive MAC over an arrival-rate sweep.'
    kind = 'mac-sim'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--trace', action='store_true', help='also write the per-slot estimation trace')

    def resolve(self, options):
        config = super().resolve(options)
        if options.get('trace'):
            config['trace'] = True
        return config

    def run_experiment(self, config):
        return mac_sim_experiment(config)
