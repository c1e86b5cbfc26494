from django.core.management.base import CommandError

from experiments.serializers import ValidateSerializer
from experiments.validation import validate

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Run the oracle cross-checks and acceptance checks; exits nonzero if any fails.'
    kind = 'validate'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--scale', choices=['quick', 'full'], help='sample sizes of the checks')
        parser.add_argument('--check', action='append', dest='checks', help='run only this check (repeatable)')

    def resolve(self, options):
        config = super().resolve(options)
        if options.get('scale'):
            config['validate']['scale'] = options['scale']
        if options.get('checks'):
            unknown = sorted(set(options['checks']) - set(ValidateSerializer.CHECKS))
            if unknown:
                raise CommandError(f"config error: validate.checks: unknown checks {unknown}")
            config['validate']['checks'] = options['checks']
        return config

    def run_experiment(self, config):
        return validate(config)

    def outcome(self, tables):
        frame = tables['validate']
        failed = frame[~frame['passed']]
        for row in failed.itertuples(index=False):
            self.stderr.write(f'FAILED {row.check}: {row.detail} = {row.value} (limit {row.limit})')
        summary = {'checks': len(frame), 'failed': len(failed),
                   'failures': [f'{row.check}: {row.detail}' for row in failed.itertuples(index=False)]}
        return ('failed' if len(failed) else 'passed'), summary
