"""
List recorded command runs
"""
import pandas as pd
from django.core.management.base import BaseCommand, CommandError

from ...models import RunRecord
from ...serializers import RunRecordSerializer
from ..base import write_json

COLUMNS = ['id', 'command', 'status_display', 'output_path', 'seed', 'duration', 'started_at']


class Command(BaseCommand):
    help = 'Show the most recent run records (read-only)'

    def add_arguments(self, parser):
        parser.add_argument('--command', dest='command_name', help='only runs of this command')
        parser.add_argument('--status', choices=[choice for choice, _ in RunRecord.RUN_STATUS])
        parser.add_argument('--limit', type=int, default=20)
        parser.add_argument('--json', dest='json_path', help='also write the records (with manifests) as JSON')

    def handle(self, *args, **options):
        if options['limit'] < 1:
            raise CommandError("--limit must be at least 1", returncode=2)
        queryset = RunRecord.objects.all()
        if options.get('command_name'):
            queryset = queryset.filter(command=options['command_name'])
        if options.get('status'):
            queryset = queryset.filter(status=options['status'])

        records = RunRecordSerializer(queryset[:options['limit']], many=True).data
        if options.get('json_path'):
            write_json(options['json_path'], records)
        if not records:
            self.stdout.write("No runs recorded")
            return
        table = pd.DataFrame(records, columns=COLUMNS)
        self.stdout.write(table.to_string(index=False))
