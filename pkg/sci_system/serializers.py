"""
Serializers for the SCI toolkit

Every text or JSON config is validated here before any domain object is built.
"""
from pathlib import Path
from typing import Dict, Optional

import numpy as np
from django.conf import settings
from rest_framework import serializers
from rest_framework.fields import empty

from .exceptions import ConfigError
from .models import RunRecord
from .sci_components.attention import AttentionConfig, Ordering
from .sci_components.cube import default_wavelengths
from .sci_components.cube_store import load_mask
from .sci_components.optics import Architecture, SystemConfig, build_system
from .sci_components.pgsvrt import MDFFNVariant
from .sci_components.solver import Initializer, SolverConfig
from .sci_components.synth import ObjectShape, SceneObject, SceneSpec


def parse_key_value_file(path) -> Dict[str, str]:
    """
    Read a flat `key = value` config file

    Blank lines and `#` comments are ignored; keys are normalized so that
    `tv-weight` and `tv_weight` name the same field.
    """
    values = {}
    for number, raw_line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw_line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{path}:{number}: expected 'key = value', got {raw_line.strip()!r}")
        key, value = (part.strip() for part in line.split('=', 1))
        values[key.replace('-', '_')] = value
    return values


def validate_or_raise(serializer: serializers.Serializer, label: str):
    """Run a serializer and turn its field errors into one ConfigError"""
    if not serializer.is_valid():
        details = '; '.join(
            f"{field}: {' '.join(str(message) for message in messages)}"
            for field, messages in serializer.errors.items()
        )
        raise ConfigError(f"invalid {label}: {details}")
    return serializer.validated_data


class NullableIntegerField(serializers.IntegerField):
    """Integer that also accepts 'none' / 'null' as None"""

    def run_validation(self, data=empty):
        if isinstance(data, str) and data.strip().lower() in ('none', 'null', ''):
            return None
        return super().run_validation(data)


class IntTupleField(serializers.Field):
    """'1,1,1' or [1, 1, 1] -> (1, 1, 1)"""

    def __init__(self, length: Optional[int] = None, **kwargs):
        self.length = length
        super().__init__(**kwargs)

    def to_internal_value(self, data):
        try:
            items = data.split(',') if isinstance(data, str) else list(data)
            values = tuple(int(item) for item in items)
        except (TypeError, ValueError):
            raise serializers.ValidationError("Expected comma-separated integers")
        if self.length is not None and len(values) != self.length:
            raise serializers.ValidationError(f"Expected exactly {self.length} integers")
        return values

    def to_representation(self, value):
        return list(value)


class SystemConfigSerializer(serializers.Serializer):
    """Serializer for encoding-system configs"""

    architecture = serializers.ChoiceField(choices=[a.value for a in Architecture])
    mask_path = serializers.CharField(required=False, allow_blank=True)
    mask_seed = serializers.IntegerField(required=False, default=0)
    mask_density = serializers.FloatField(required=False, min_value=0.0, max_value=1.0)
    dispersion_step = serializers.IntegerField(required=False, min_value=0)
    dispersion_direction = serializers.ChoiceField(choices=[1, -1], required=False, default=1)
    noise_sigma = serializers.FloatField(required=False, min_value=0.0, default=0.0)
    channels = serializers.IntegerField(required=False, min_value=1)

    def validate_mask_density(self, value):
        if value <= 0.0:
            raise serializers.ValidationError("Mask density must be greater than 0")
        return value

    def build(self, height: int, width: int, wavelengths: Optional[np.ndarray] = None) -> SystemConfig:
        """SystemConfig for a scene of the given extent"""
        data = self.validated_data
        if wavelengths is None:
            channels = data.get('channels') or 30
            wavelengths = default_wavelengths(channels, settings.SCI_WAVELENGTH_MIN, settings.SCI_WAVELENGTH_MAX)
        architecture = Architecture(data['architecture'])
        mask = None
        if data.get('mask_path'):
            mask_path = Path(data['mask_path'])
            if not mask_path.exists():
                raise FileNotFoundError(f"mask file not found: {mask_path}")
            mask = load_mask(mask_path, architecture.mask_kind)
        return build_system(
            architecture,
            height,
            width,
            wavelengths=wavelengths,
            seed=data.get('mask_seed', 0),
            density=data.get('mask_density'),
            step=data.get('dispersion_step'),
            direction=int(data.get('dispersion_direction', 1)),
            noise_sigma=data.get('noise_sigma', 0.0),
            mask=mask,
        )

    def scene_width(self, width_prime: int) -> int:
        """W of the scene behind a measurement of width W'"""
        data = self.validated_data
        architecture = Architecture(data['architecture'])
        if not architecture.single_disperser:
            return width_prime
        step = data.get('dispersion_step')
        step = settings.SCI_DISPERSION_STEP if step is None else step
        width = width_prime - step * ((data.get('channels') or 30) - 1)
        if width < 1:
            raise ConfigError(f"measurement width {width_prime} is too narrow for the configured dispersion")
        return width


class SolverConfigSerializer(serializers.Serializer):
    """Serializer for GAP-TV parameters"""

    iterations = serializers.IntegerField(required=False, min_value=1)
    tv_weight = serializers.FloatField(required=False, min_value=0.0)
    tv_inner_iterations = serializers.IntegerField(required=False, min_value=1)
    temporal_tv = serializers.BooleanField(required=False, allow_null=True, default=None)
    step_size = serializers.FloatField(required=False)
    initializer = serializers.ChoiceField(
        choices=[i.value for i in Initializer], required=False, default=Initializer.ADJOINT.value
    )

    def validate_step_size(self, value):
        if value <= 0:
            raise serializers.ValidationError("Step size must be positive")
        return value

    def build(self) -> SolverConfig:
        return SolverConfig(**self.validated_data)


class NetworkConfigSerializer(serializers.Serializer):
    """Serializer for PG-SVRT construction options"""

    seed = serializers.IntegerField(required=False, default=0)
    depth = IntTupleField(length=3, required=False)
    heads = serializers.IntegerField(required=False, min_value=1)
    h_win = serializers.IntegerField(required=False, min_value=1)
    w_win = serializers.IntegerField(required=False, min_value=1)
    n_bridged = NullableIntegerField(required=False, min_value=1, allow_null=True)
    variant = serializers.ChoiceField(choices=[v.value for v in MDFFNVariant], required=False,
                                      default=MDFFNVariant.FULL.value)
    ordering = serializers.ChoiceField(choices=[o.value for o in Ordering], required=False,
                                       default=Ordering.ST_PROPAGATED.value)

    def validate_depth(self, value):
        if min(value) < 0:
            raise serializers.ValidationError("Block counts must be nonnegative")
        return value

    def network_options(self) -> dict:
        data = dict(self.validated_data)
        data.pop('seed', None)
        if 'n_bridged' not in data:
            data['n_bridged'] = -1
        return data


class AttentionConfigSerializer(serializers.Serializer):
    """Serializer for CDPA accounting configs"""

    channels = serializers.IntegerField(min_value=1)
    frames = serializers.IntegerField(min_value=1)
    height = serializers.IntegerField(min_value=1)
    width = serializers.IntegerField(min_value=1)
    h_win = serializers.IntegerField(required=False, min_value=1)
    w_win = serializers.IntegerField(required=False, min_value=1)
    n_bridged = NullableIntegerField(required=False, min_value=1, allow_null=True)
    heads = serializers.IntegerField(required=False, min_value=1)

    def validate(self, data):
        try:
            self.build_from(data)
        except ConfigError as exc:
            raise serializers.ValidationError(str(exc))
        return data

    @staticmethod
    def build_from(data) -> AttentionConfig:
        data = dict(data)
        if 'n_bridged' not in data:
            data['n_bridged'] = -1
        return AttentionConfig(**data)

    def build(self) -> AttentionConfig:
        return self.build_from(self.validated_data)


class SceneObjectSerializer(serializers.Serializer):
    """Serializer for one synthetic scene object"""

    shape = serializers.ChoiceField(choices=[s.value for s in ObjectShape])
    center = IntTupleField(length=2)
    spectrum_center = serializers.FloatField()
    spectrum_width = serializers.FloatField(min_value=0.0)
    amplitude = serializers.FloatField(required=False, default=1.0, min_value=0.0, max_value=1.0)
    radius = serializers.FloatField(required=False, default=4.0)
    half_height = serializers.FloatField(required=False, default=4.0)
    half_width = serializers.FloatField(required=False, default=4.0)
    velocity = IntTupleField(length=2, required=False, default=(0, 0))
    rotation = serializers.FloatField(required=False, default=0.0)


class SceneSpecSerializer(serializers.Serializer):
    """Serializer for synthetic scene specs (JSON documents)"""

    frames = serializers.IntegerField(min_value=1)
    height = serializers.IntegerField(min_value=1)
    width = serializers.IntegerField(min_value=1)
    channels = serializers.IntegerField(min_value=1)
    objects = SceneObjectSerializer(many=True, required=False, default=list)
    background_center = serializers.FloatField(required=False, default=575.0)
    background_width = serializers.FloatField(required=False, default=60.0)
    background_amplitude = serializers.FloatField(required=False, default=0.2, min_value=0.0, max_value=1.0)
    max_displacement = serializers.IntegerField(required=False, default=4, min_value=0)
    seed = serializers.IntegerField(required=False, default=0)
    background_texture = serializers.FloatField(required=False, default=0.0, min_value=0.0, max_value=1.0)

    def validate(self, data):
        try:
            self.build_from(data)
        except ConfigError as exc:
            raise serializers.ValidationError(str(exc))
        return data

    @staticmethod
    def build_from(data) -> SceneSpec:
        data = dict(data)
        data['objects'] = [SceneObject(**obj) for obj in data.get('objects', [])]
        return SceneSpec(**data)

    def build(self) -> SceneSpec:
        return self.build_from(self.validated_data)


class MetricReportSerializer(serializers.Serializer):
    """Serializer for evaluation results"""

    psnr_db = serializers.FloatField()
    ssim = serializers.FloatField()
    sam_deg = serializers.FloatField()
    temporal_score = serializers.FloatField(allow_null=True)
    temporal_variant = serializers.CharField()


class FlopReportSerializer(serializers.Serializer):
    """Serializer for CDPA MAC counts"""

    projection_macs = serializers.IntegerField()
    bridged_attention_macs = serializers.IntegerField()
    temporal_attention_macs = serializers.IntegerField()
    total_macs = serializers.IntegerField()


class RunManifestSerializer(serializers.Serializer):
    """Serializer for the manifest written next to every command output"""

    command = serializers.CharField(max_length=50)
    options = serializers.DictField()
    inputs = serializers.DictField(child=serializers.CharField(allow_blank=True), required=False, default=dict)
    outputs = serializers.DictField(child=serializers.CharField(), required=False, default=dict)
    seed = serializers.IntegerField(allow_null=True, required=False, default=None)
    toolkit_version = serializers.CharField()
    duration = serializers.FloatField(min_value=0.0)
    timestamp = serializers.DateTimeField()


class RunRecordSerializer(serializers.ModelSerializer):
    """Serializer for RunRecord model"""

    status_display = serializers.CharField(source='get_status_display', read_only=True)

    class Meta:
        model = RunRecord
        fields = [
            'id', 'command', 'status', 'status_display', 'output_path', 'seed',
            'error_message', 'started_at', 'completed_at', 'duration', 'manifest'
        ]
        read_only_fields = [
            'status', 'started_at', 'completed_at', 'duration'
        ]
