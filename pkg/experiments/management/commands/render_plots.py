from django.core.management.base import BaseCommand, CommandError

from core.exceptions import M2MError
from experiments.plots import render_plots


class Command(BaseCommand):
    help = 'Draw line charts from CSV files written by the experiment commands.'

    def add_arguments(self, parser):
        parser.add_argument('csv', nargs='+', help='result CSV files')
        parser.add_argument('--out', help='directory for the PNG files (default: next to each CSV)')

    def handle(self, *args, **options):
        for csv_path in options['csv']:
            try:
                paths = render_plots(csv_path, options.get('out'))
            except FileNotFoundError:
                raise CommandError(f"{csv_path}: no such file")
            except M2MError as e:
                raise CommandError(f"{csv_path}: {e}")
            for path in paths:
                self.stdout.write(f'wrote {path}')
