import logging

from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError
from rest_framework import serializers

from core.exceptions import M2MError
from experiments.models import ExperimentRun
from experiments.output import write_tables
from experiments.serializers import load_config

logger = logging.getLogger(__name__)


class ExperimentCommand(BaseCommand):
    """Common flags, config resolution, run registry and CSV output for the experiment commands."""

    kind = None

    def add_arguments(self, parser):
        parser.add_argument('--config', help='JSON experiment configuration file')
        parser.add_argument('--seed', type=int, help='master seed (overrides the file)')
        parser.add_argument('--out', help='output directory (overrides the file)')
        parser.add_argument('--reps', type=int, help='replications per point (overrides the file)')
        parser.add_argument('--jobs', type=int, help='worker processes (overrides the file)')

    def run_experiment(self, config):
        raise NotImplementedError

    def outcome(self, tables):
        """(status, summary) stored on the run once the tables are written."""
        return 'completed', {name: len(frame) for name, frame in tables.items()}

    def resolve(self, options):
        overrides = {key: options.get(key) for key in ('seed', 'out', 'reps', 'jobs')}
        try:
            return load_config(self.kind, options.get('config'), overrides)
        except serializers.ValidationError as e:
            raise CommandError(f"config error: {'; '.join(str(m) for m in e.detail)}")

    def register(self, config):
        try:
            return ExperimentRun.objects.create(kind=self.kind, seed=config['seed'], config=config,
                                                output_path=config['out'])
        except DatabaseError as e:
            logger.warning(f"run registry unavailable, continuing without it: {e}")
            return None

    def finish(self, run, status, summary):
        if run is None:
            return
        run.status = status
        run.summary = summary
        try:
            run.save(update_fields=['status', 'summary', 'updated_at'])
        except DatabaseError as e:
            logger.warning(f"could not update run {run.pk}: {e}")

    def handle(self, *args, **options):
        config = self.resolve(options)
        run = self.register(config)
        logger.info(f"{self.kind}: seed={config['seed']} reps={config['reps']} jobs={config['jobs']}")
        try:
            tables = self.run_experiment(config)
        except M2MError as e:
            self.finish(run, 'failed', {'error': str(e)})
            raise CommandError(f"{self.kind} failed: {e}")
        paths = write_tables(tables, config)
        status, summary = self.outcome(tables)
        summary['files'] = {name: str(path) for name, path in paths.items()}
        self.finish(run, status, summary)
        for path in paths.values():
            self.stdout.write(f'wrote {path}')
        if status == 'failed':
            raise CommandError(f"{self.kind}: {summary.get('failed', 0)} checks failed")
        self.stdout.write(self.style.SUCCESS(f'{self.kind} {status}'))
