"""
Spectral-cube domain types shared by every toolkit component
"""
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple

import numpy as np

from ..exceptions import ConfigError, NumericalError, ShapeError

MAX_RANK = 5
FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


def _frozen_array(values, ndim: int, name: str) -> np.ndarray:
    array = np.asarray(values)
    if array.dtype not in FLOAT_DTYPES:
        array = array.astype(np.float64)
    if array.ndim != ndim:
        raise ShapeError(f"{name} must have rank {ndim}, got shape {array.shape}")
    array = np.ascontiguousarray(array).copy()
    array.setflags(write=False)
    return array


def flat_index(shape: Sequence[int], index: Sequence[int]) -> int:
    """
    Row-major flat offset of `index` inside a tensor of extents `shape`

    For a T,H,W,C tensor the offset of (i, j, k, l) is ((i*H + j)*W + k)*C + l.
    """
    if len(shape) > MAX_RANK:
        raise ShapeError(f"rank {len(shape)} exceeds the supported maximum of {MAX_RANK}")
    if len(shape) != len(index):
        raise ShapeError(f"index {tuple(index)} does not match rank of shape {tuple(shape)}")
    offset = 0
    for extent, i in zip(shape, index):
        if not 0 <= i < extent:
            raise ShapeError(f"index {tuple(index)} out of range for shape {tuple(shape)}")
        offset = offset * extent + i
    return offset


def default_wavelengths(channels: int, low: float = 500.0, high: float = 650.0) -> np.ndarray:
    """Evenly spaced band centers in nanometers"""
    if channels < 1:
        raise ConfigError("channel count must be at least 1")
    if channels == 1:
        return np.array([low], dtype=np.float64)
    return np.linspace(low, high, channels, dtype=np.float64)


@dataclass(frozen=True)
class SpectralCube:
    """T x H x W x C reflectance video with its band centers"""

    values: np.ndarray
    wavelengths: np.ndarray

    def __post_init__(self):
        values = _frozen_array(self.values, 4, "cube values")
        wavelengths = np.asarray(self.wavelengths, dtype=np.float64).reshape(-1).copy()
        wavelengths.setflags(write=False)
        if wavelengths.size != values.shape[3]:
            raise ShapeError(
                f"{wavelengths.size} wavelengths given for {values.shape[3]} channels"
            )
        if wavelengths.size > 1 and not np.all(np.diff(wavelengths) > 0):
            raise ConfigError("wavelengths must be strictly increasing")
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'wavelengths', wavelengths)

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def channels(self) -> int:
        return self.values.shape[3]

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return self.values.shape

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype

    @property
    def is_normalized(self) -> bool:
        return bool(np.all(self.values >= 0.0) and np.all(self.values <= 1.0))

    def normalized(self) -> "SpectralCube":
        """Copy with values clipped to [0, 1]"""
        return self.with_values(np.clip(self.values, 0.0, 1.0))

    def with_values(self, values: np.ndarray) -> "SpectralCube":
        return SpectralCube(values, self.wavelengths)

    def astype(self, dtype) -> "SpectralCube":
        return SpectralCube(self.values.astype(dtype), self.wavelengths)

    @classmethod
    def zeros(cls, frames: int, height: int, width: int, wavelengths) -> "SpectralCube":
        wavelengths = np.asarray(wavelengths, dtype=np.float64)
        return cls(np.zeros((frames, height, width, wavelengths.size)), wavelengths)


@dataclass(frozen=True)
class MeasurementSequence:
    """T x H x W' stack of coded sensor frames"""

    values: np.ndarray

    def __post_init__(self):
        values = _frozen_array(self.values, 3, "measurement values")
        if not np.all(np.isfinite(values)):
            raise NumericalError("measurement values must be finite")
        object.__setattr__(self, 'values', values)

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width_prime(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.values.shape

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype


class MaskKind(str, Enum):
    RANDOM_BINARY = 'random-binary'
    NOTCH = 'notch'
    SPARSE_GRID = 'sparse-grid'


@dataclass(frozen=True)
class CodedMask:
    """H x W aperture transmission pattern"""

    transmission: np.ndarray
    kind: MaskKind = MaskKind.RANDOM_BINARY

    def __post_init__(self):
        transmission = _frozen_array(self.transmission, 2, "mask transmission")
        kind = MaskKind(self.kind)
        if np.any(transmission < 0.0) or np.any(transmission > 1.0):
            raise ConfigError("mask transmission must lie in [0, 1]")
        if kind is MaskKind.RANDOM_BINARY and not np.all(
            (transmission == 0.0) | (transmission == 1.0)
        ):
            raise ConfigError("random-binary masks must be exactly 0 or 1")
        object.__setattr__(self, 'transmission', transmission)
        object.__setattr__(self, 'kind', kind)

    @property
    def height(self) -> int:
        return self.transmission.shape[0]

    @property
    def width(self) -> int:
        return self.transmission.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.transmission.shape
