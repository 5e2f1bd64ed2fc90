"""
Shared plumbing for the SCI management commands

Every command runs inside `SCICommand.handle`, which records a RunRecord,
writes `<out>.manifest.json` and maps toolkit errors to exit codes:
2 for input/config errors and 3 for numerical failures.
"""
import argparse
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError
from django.utils import timezone
from rest_framework import serializers

from ..exceptions import ConfigError, NumericalError
from ..models import RunRecord
from ..serializers import (
    RunManifestSerializer,
    SceneSpecSerializer,
    SolverConfigSerializer,
    SystemConfigSerializer,
    parse_key_value_file,
    validate_or_raise,
)
from ..sci_components.cube import SpectralCube
from ..sci_components.cube_store import load_cube
from ..sci_components.synth import synth_scene

logger = logging.getLogger(__name__)

BASE_OPTIONS = {
    'verbosity', 'settings', 'pythonpath', 'traceback', 'no_color', 'force_color', 'skip_checks', 'stdout', 'stderr',
}

SYSTEM_OVERRIDES = {
    'architecture': 'architecture',
    'mask': 'mask_path',
    'mask_seed': 'mask_seed',
    'density': 'mask_density',
    'step': 'dispersion_step',
    'direction': 'dispersion_direction',
    'noise_sigma': 'noise_sigma',
    'channels': 'channels',
}

SOLVER_OVERRIDES = {
    'iterations': 'iterations',
    'tv_weight': 'tv_weight',
    'tv_inner': 'tv_inner_iterations',
    'temporal_tv': 'temporal_tv',
    'step_size': 'step_size',
    'initializer': 'initializer',
}


@dataclass
class RunOutcome:
    """What a command reports back for its manifest"""

    outputs: Dict[str, str] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    seed: Optional[int] = None


def manifest_path(output: str) -> Path:
    return Path(f"{output}.manifest.json")


def require(options: Dict[str, Any], *names: str) -> None:
    missing = [f"--{name.replace('_', '-')}" for name in names if not options.get(name)]
    if missing:
        raise ConfigError(f"missing required option(s): {', '.join(missing)}")


def merged_config(path: Optional[str], options: Dict[str, Any], overrides: Dict[str, str]) -> Dict[str, Any]:
    """Key/value file values overridden key by key by the command-line flags that were given"""
    data: Dict[str, Any] = {}
    if path:
        if not Path(path).exists():
            raise FileNotFoundError(f"config file not found: {path}")
        data.update(parse_key_value_file(path))
    for option, key in overrides.items():
        if options.get(option) is not None:
            data[key] = options[option]
    return data


def add_system_arguments(parser) -> None:
    group = parser.add_argument_group('encoding system')
    group.add_argument('--system', help='key = value system config file')
    group.add_argument('--architecture', help='SD-CASSI, DD-CASSI, PMVIS or NDSSI')
    group.add_argument('--mask', help='mask file (SCUB, one frame, one channel)')
    group.add_argument('--mask-seed', type=int)
    group.add_argument('--density', type=float)
    group.add_argument('--step', type=int, help='dispersion step in pixels per channel')
    group.add_argument('--direction', type=int, choices=[1, -1])
    group.add_argument('--noise-sigma', type=float)
    group.add_argument('--channels', type=int, help='spectral channel count (needed to reconstruct)')


def add_solver_arguments(parser) -> None:
    group = parser.add_argument_group('solver')
    group.add_argument('--solver', help='key = value solver config file')
    group.add_argument('--iterations', type=int)
    group.add_argument('--tv-weight', type=float)
    group.add_argument('--tv-inner', type=int)
    group.add_argument('--temporal-tv', action=argparse.BooleanOptionalAction, default=None)
    group.add_argument('--step-size', type=float)
    group.add_argument('--initializer', choices=['adjoint', 'back-projection', 'zero'])


def add_scene_arguments(parser) -> None:
    group = parser.add_argument_group('scene')
    group.add_argument('--scene', help='scene cube (SCUB)')
    group.add_argument('--scene-spec', help='synthetic scene spec (JSON)')


def system_serializer(options: Dict[str, Any]) -> SystemConfigSerializer:
    serializer = SystemConfigSerializer(data=merged_config(options.get('system'), options, SYSTEM_OVERRIDES))
    validate_or_raise(serializer, 'system config')
    return serializer


def solver_config(options: Dict[str, Any]):
    serializer = SolverConfigSerializer(data=merged_config(options.get('solver'), options, SOLVER_OVERRIDES))
    validate_or_raise(serializer, 'solver config')
    return serializer.build()


def load_scene_spec(path: str):
    if not Path(path).exists():
        raise FileNotFoundError(f"scene spec not found: {path}")
    try:
        document = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    serializer = SceneSpecSerializer(data=document)
    validate_or_raise(serializer, f'scene spec {path}')
    return serializer.build()


def load_scene(options: Dict[str, Any]) -> SpectralCube:
    if options.get('scene'):
        return load_existing_cube(options['scene'])
    if options.get('scene_spec'):
        return synth_scene(load_scene_spec(options['scene_spec']))
    raise ConfigError("missing required option: --scene or --scene-spec")


def load_existing_cube(path: str) -> SpectralCube:
    if not Path(path).exists():
        raise FileNotFoundError(f"cube file not found: {path}")
    return load_cube(path)


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, default=str))


class SCICommand(BaseCommand):
    """BaseCommand with run records, manifests and exit-code mapping"""

    output_option = 'out'

    def run(self, options: Dict[str, Any]) -> RunOutcome:
        raise NotImplementedError

    def say(self, message: str, style=None) -> None:
        if self.verbosity >= 1:
            self.stdout.write(style(message) if style else message)

    def _open_record(self, output: str, seed) -> Optional[RunRecord]:
        try:
            return RunRecord.objects.create(command=self.command_name, output_path=output or '', seed=seed)
        except DatabaseError as exc:
            logger.warning(f"Run record unavailable, continuing without it: {exc}")
            return None

    def _close_record(self, record: Optional[RunRecord], status: str, duration: float,
                      manifest=None, error: str = '') -> None:
        if record is None:
            return
        try:
            record.status = status
            record.completed_at = timezone.now()
            record.duration = duration
            record.error_message = error
            record.manifest = manifest
            record.save()
        except DatabaseError as exc:
            logger.warning(f"Could not update run record {record.pk}: {exc}")

    @property
    def command_name(self) -> str:
        return self.__module__.rsplit('.', 1)[-1]

    def handle(self, *args, **options):
        self.verbosity = options.get('verbosity', 1)
        resolved = {key: value for key, value in options.items() if key not in BASE_OPTIONS}
        output = resolved.get(self.output_option)
        record = self._open_record(output, resolved.get('seed'))
        start_time = time.time()

        try:
            outcome = self.run(resolved)
        except (ConfigError, OSError, serializers.ValidationError) as exc:
            self._close_record(record, 'failed', time.time() - start_time, error=str(exc))
            raise CommandError(str(exc), returncode=2)
        except NumericalError as exc:
            self._close_record(record, 'failed', time.time() - start_time, error=str(exc))
            raise CommandError(f"numerical failure: {exc}", returncode=3)

        duration = time.time() - start_time
        manifest = {
            'command': self.command_name,
            'options': resolved,
            'inputs': outcome.inputs,
            'outputs': outcome.outputs,
            'seed': outcome.seed,
            'toolkit_version': settings.SCI_TOOLKIT_VERSION,
            'duration': duration,
            'timestamp': timezone.now().isoformat(),
        }
        validate_or_raise(RunManifestSerializer(data=manifest), 'run manifest')
        if output:
            write_json(manifest_path(output), manifest)
        self._close_record(record, 'completed', duration, manifest=manifest)
        self.say(f"✅ {self.command_name} finished in {duration:.3f}s", self.style.SUCCESS)
