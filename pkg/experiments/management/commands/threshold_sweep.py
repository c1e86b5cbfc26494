from experiments.runners import threshold_sweep

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Activity probability at which each method stops beating the per-type baseline.'
    kind = 'threshold-sweep'

    def run_experiment(self, config):
        return threshold_sweep(config)
