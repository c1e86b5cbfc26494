from experiments.runners import analysis_table

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Every closed form next to its oracle or Monte Carlo reference, with deltas and a status column.'
    kind = 'analysis-table'

    def run_experiment(self, config):
        return analysis_table(config)

    def outcome(self, tables):
        frame = tables['analysis_table']
        flagged = int(frame['status'].isin(['flagged', 'violation']).sum())
        return 'completed', {'rows': len(frame), 'flagged': flagged}
