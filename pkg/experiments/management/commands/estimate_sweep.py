from experiments.runners import estimation_sweep

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Mean slots per estimation for Method I, Method II and the baseline over an activity sweep.'
    kind = 'estimation-sweep'

    def run_experiment(self, config):
        return estimation_sweep(config)
