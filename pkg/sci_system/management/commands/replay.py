"""
Re-run a command from its manifest
"""
import json
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import BaseCommand, CommandError


class Command(BaseCommand):
    help = 'Re-invoke the command recorded in a <output>.manifest.json with the same options'

    def add_arguments(self, parser):
        parser.add_argument('manifest', help='manifest written by an earlier run')

    def handle(self, *args, **options):
        path = Path(options['manifest'])
        if not path.exists():
            raise CommandError(f"manifest not found: {path}", returncode=2)
        try:
            manifest = json.loads(path.read_text())
            command, recorded = manifest['command'], manifest['options']
        except (json.JSONDecodeError, KeyError) as exc:
            raise CommandError(f"{path} is not a run manifest: {exc}", returncode=2)
        if command == 'replay':
            raise CommandError("refusing to replay a replay manifest", returncode=2)

        self.stdout.write(f"🔄 Replaying {command} from {path}")
        call_command(command, verbosity=options['verbosity'], stdout=self.stdout, stderr=self.stderr, **recorded)
