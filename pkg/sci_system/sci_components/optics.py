"""
Forward and adjoint operators of the four SCI architectures

Single-disperser systems (SD-CASSI, PMVIS) modulate the scene with the mask and
then shear it along the width:

    Y(h, w') = sum_c Phi(h, w' - s(c)) * X(h, w' - s(c), c)        W' = W + step*(C-1)

Dual-disperser systems (DD-CASSI, NDSSI) modulate in the sheared domain and
un-shear again:

    Y(h, w) = sum_c Phi(h, w - sigma(c)) * X(h, w, c)                W' = W

Out-of-range coordinates contribute zero. s(c) is sigma(c) moved so the
smallest shift is zero, which lets a negative dispersion direction share the
same measurement grid.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from django.conf import settings

from ..exceptions import ConfigError, ShapeError
from .cube import CodedMask, MaskKind, MeasurementSequence, SpectralCube, default_wavelengths

logger = logging.getLogger(__name__)


class Architecture(str, Enum):
    SD_CASSI = 'SD-CASSI'
    DD_CASSI = 'DD-CASSI'
    PMVIS = 'PMVIS'
    NDSSI = 'NDSSI'

    @property
    def single_disperser(self) -> bool:
        return self in (Architecture.SD_CASSI, Architecture.PMVIS)

    @property
    def mask_kind(self) -> MaskKind:
        return ARCHITECTURE_MASKS[self]


ARCHITECTURE_MASKS = {
    Architecture.SD_CASSI: MaskKind.RANDOM_BINARY,
    Architecture.DD_CASSI: MaskKind.RANDOM_BINARY,
    Architecture.PMVIS: MaskKind.SPARSE_GRID,
    Architecture.NDSSI: MaskKind.NOTCH,
}


@dataclass(frozen=True)
class DispersionSpec:
    """Linear dispersion sigma(c) = direction * step * c, in whole pixels"""

    step: int = 1
    direction: int = 1

    def __post_init__(self):
        if int(self.step) != self.step or self.step < 0:
            raise ConfigError(f"dispersion step must be a nonnegative integer, got {self.step}")
        if self.direction not in (1, -1):
            raise ConfigError(f"dispersion direction must be +1 or -1, got {self.direction}")
        object.__setattr__(self, 'step', int(self.step))

    def sigma(self, channel: int) -> int:
        return self.direction * self.step * channel

    def shifts(self, channels: int) -> np.ndarray:
        return np.array([self.sigma(c) for c in range(channels)], dtype=np.int64)

    def sheared_offsets(self, channels: int) -> np.ndarray:
        """Column offset of each channel on the single-disperser measurement grid"""
        shifts = self.shifts(channels)
        return shifts - shifts.min()

    def spread(self, channels: int) -> int:
        """Extra measurement columns introduced by a single disperser"""
        return self.step * (channels - 1)


@dataclass(frozen=True)
class SystemConfig:
    """One encoding system: architecture, mask, dispersion, noise and band centers"""

    architecture: Architecture
    mask: CodedMask
    dispersion: DispersionSpec = field(default_factory=DispersionSpec)
    noise_sigma: float = 0.0
    wavelengths: Optional[np.ndarray] = None

    def __post_init__(self):
        architecture = Architecture(self.architecture)
        object.__setattr__(self, 'architecture', architecture)
        if self.mask.kind is not architecture.mask_kind:
            raise ConfigError(
                f"{architecture.value} expects a {architecture.mask_kind.value} mask, got {self.mask.kind.value}"
            )
        if self.noise_sigma < 0 or not math.isfinite(self.noise_sigma):
            raise ConfigError(f"noise_sigma must be a finite nonnegative number, got {self.noise_sigma}")
        wavelengths = self.wavelengths
        if wavelengths is None:
            wavelengths = default_wavelengths(30, settings.SCI_WAVELENGTH_MIN, settings.SCI_WAVELENGTH_MAX)
        wavelengths = np.asarray(wavelengths, dtype=np.float64).reshape(-1).copy()
        wavelengths.setflags(write=False)
        object.__setattr__(self, 'wavelengths', wavelengths)

    @property
    def channels(self) -> int:
        return self.wavelengths.size

    @property
    def height(self) -> int:
        return self.mask.height

    @property
    def width(self) -> int:
        return self.mask.width

    @property
    def width_prime(self) -> int:
        if self.architecture.single_disperser:
            return self.width + self.dispersion.spread(self.channels)
        return self.width


def make_mask(kind, height: int, width: int, seed: int = 0, density: Optional[float] = None) -> CodedMask:
    """
    Generate a coded aperture

    Args:
        kind: random-binary, sparse-grid or notch
        height, width: Mask extent in pixels
        seed: Seed of the pattern; equal seeds give identical masks
        density: Fraction of open pixels in (0, 1]

    Returns:
        CodedMask of the requested family
    """
    kind = MaskKind(kind)
    if density is None:
        density = {
            MaskKind.RANDOM_BINARY: settings.SCI_MASK_DENSITY,
            MaskKind.SPARSE_GRID: settings.SCI_SPARSE_GRID_DENSITY,
            MaskKind.NOTCH: settings.SCI_NOTCH_DENSITY,
        }[kind]
    if height < 1 or width < 1:
        raise ConfigError(f"mask extent must be positive, got {height}x{width}")
    if not 0.0 < density <= 1.0:
        raise ConfigError(f"mask density must lie in (0, 1], got {density}")

    rng = np.random.default_rng(seed)
    if kind is MaskKind.RANDOM_BINARY:
        transmission = (rng.random((height, width)) < density).astype(np.float64)
    elif kind is MaskKind.SPARSE_GRID:
        pitch = math.ceil(1.0 / math.sqrt(density))
        row_phase, col_phase = rng.integers(0, pitch, size=2)
        transmission = np.zeros((height, width))
        transmission[row_phase::pitch, col_phase::pitch] = 1.0
    else:
        transmission = np.ones((height, width))
        notches = int(round((1.0 - density) * width))
        for row in range(height):
            if notches:
                transmission[row, rng.choice(width, size=notches, replace=False)] = 0.0
    logger.debug(f"Generated {kind.value} mask {height}x{width}, open fraction {transmission.mean():.4f}")
    return CodedMask(transmission, kind)


def shift_mask(mask: CodedMask, dispersion: DispersionSpec, channels: int) -> np.ndarray:
    """
    Per-channel sheared mask volume M(h, w, c) = Phi(h, w - sigma(c)), zero-filled

    Returns:
        H x W x C array; channel 0 is the mask itself
    """
    if channels < 1:
        raise ConfigError("channel count must be at least 1")
    height, width = mask.shape
    volume = np.zeros((height, width, channels))
    for c, shift in enumerate(dispersion.shifts(channels)):
        if shift >= 0:
            if shift < width:
                volume[:, shift:, c] = mask.transmission[:, :width - shift]
        elif -shift < width:
            volume[:, :width + shift, c] = mask.transmission[:, -shift:]
    return volume


def _check_frame(frame: np.ndarray, mask: CodedMask) -> None:
    if frame.ndim != 3 or frame.shape[:2] != mask.shape:
        raise ShapeError(f"frame of shape {frame.shape} does not match mask {mask.shape}")


def forward_sd(frame: np.ndarray, mask: CodedMask, dispersion: DispersionSpec) -> np.ndarray:
    """Single-disperser encoding of one H x W x C frame into H x W'"""
    _check_frame(frame, mask)
    height, width, channels = frame.shape
    offsets = dispersion.sheared_offsets(channels)
    modulated = frame * mask.transmission[:, :, None]
    measurement = np.zeros((height, width + dispersion.spread(channels)))
    for c, offset in enumerate(offsets):
        measurement[:, offset:offset + width] += modulated[:, :, c]
    return measurement


def forward_dd(frame: np.ndarray, mask: CodedMask, dispersion: DispersionSpec) -> np.ndarray:
    """Dual-disperser encoding of one H x W x C frame into H x W"""
    _check_frame(frame, mask)
    volume = shift_mask(mask, dispersion, frame.shape[2])
    return np.einsum('hwc,hwc->hw', volume, frame)


def adjoint_sd(measurement: np.ndarray, mask: CodedMask, dispersion: DispersionSpec, channels: int) -> np.ndarray:
    height, width = mask.shape
    if measurement.shape != (height, width + dispersion.spread(channels)):
        raise ShapeError(f"measurement of shape {measurement.shape} does not match the SD grid")
    frame = np.empty((height, width, channels))
    for c, offset in enumerate(dispersion.sheared_offsets(channels)):
        frame[:, :, c] = measurement[:, offset:offset + width]
    return frame * mask.transmission[:, :, None]


def adjoint_dd(measurement: np.ndarray, mask: CodedMask, dispersion: DispersionSpec, channels: int) -> np.ndarray:
    if measurement.shape != mask.shape:
        raise ShapeError(f"measurement of shape {measurement.shape} does not match the DD grid")
    return shift_mask(mask, dispersion, channels) * measurement[:, :, None]


def encode_frame(frame: np.ndarray, config: SystemConfig) -> np.ndarray:
    """Noiseless Psi applied to one frame"""
    if config.architecture.single_disperser:
        return forward_sd(frame, config.mask, config.dispersion)
    return forward_dd(frame, config.mask, config.dispersion)


def transpose_frame(measurement: np.ndarray, config: SystemConfig) -> np.ndarray:
    """Psi^T applied to one measurement frame"""
    if config.architecture.single_disperser:
        return adjoint_sd(measurement, config.mask, config.dispersion, config.channels)
    return adjoint_dd(measurement, config.mask, config.dispersion, config.channels)


def mask_energy(config: SystemConfig) -> np.ndarray:
    """
    Diagonal of Psi Psi^T on the measurement grid

    Both operator families have a diagonal Gram matrix, so this is the exact
    per-pixel normalizer used by back-projection and the GAP update.
    """
    if not config.architecture.single_disperser:
        return np.sum(shift_mask(config.mask, config.dispersion, config.channels) ** 2, axis=2)
    squared = config.mask.transmission ** 2
    energy = np.zeros((config.height, config.width_prime))
    for offset in config.dispersion.sheared_offsets(config.channels):
        energy[:, offset:offset + config.width] += squared
    return energy


def _workers() -> Optional[int]:
    return settings.SCI_NUM_THREADS or None


def _check_cube(cube_values: np.ndarray, config: SystemConfig) -> None:
    expected = (config.height, config.width, config.channels)
    if cube_values.ndim != 4 or cube_values.shape[1:] != expected:
        raise ShapeError(f"cube of shape {cube_values.shape} does not match system (H, W, C) = {expected}")


def apply_operator(values: np.ndarray, config: SystemConfig) -> np.ndarray:
    """Noiseless Psi over a T x H x W x C array, one frame per worker"""
    _check_cube(values, config)
    values = values.astype(np.float64, copy=False)
    output = np.empty((values.shape[0], config.height, config.width_prime))

    def encode(t):
        output[t] = encode_frame(values[t], config)

    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        list(pool.map(encode, range(values.shape[0])))
    return output


def apply_adjoint(values: np.ndarray, config: SystemConfig) -> np.ndarray:
    """Psi^T over a T x H x W' array"""
    if values.ndim != 3 or values.shape[1:] != (config.height, config.width_prime):
        raise ShapeError(
            f"measurement of shape {values.shape} does not match system (H, W') = {(config.height, config.width_prime)}"
        )
    values = values.astype(np.float64, copy=False)
    output = np.empty((values.shape[0], config.height, config.width, config.channels))

    def transpose(t):
        output[t] = transpose_frame(values[t], config)

    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        list(pool.map(transpose, range(values.shape[0])))
    return output


def forward(cube: SpectralCube, config: SystemConfig, seed: int = 0) -> MeasurementSequence:
    """
    Encode a spectral video: Y_t = Psi X_t + Theta_t

    The same mask encodes every frame. Noise is i.i.d. Gaussian with standard
    deviation `config.noise_sigma`, drawn from one SeedSequence child per frame
    so results do not depend on the worker count.
    """
    clean = apply_operator(cube.values, config)
    if config.noise_sigma > 0:
        streams = np.random.SeedSequence(seed).spawn(clean.shape[0])
        for t, stream in enumerate(streams):
            clean[t] += config.noise_sigma * np.random.default_rng(stream).standard_normal(clean.shape[1:])
    logger.info(
        f"Encoded {cube.shape} through {config.architecture.value}: measurement {clean.shape}, noise {config.noise_sigma}"
    )
    return MeasurementSequence(clean)


def adjoint(meas: MeasurementSequence, config: SystemConfig) -> SpectralCube:
    """Exact transpose of the noiseless forward map"""
    return SpectralCube(apply_adjoint(meas.values, config), config.wavelengths)


def build_system(
    architecture,
    height: int,
    width: int,
    wavelengths=None,
    seed: int = 0,
    density: Optional[float] = None,
    step: Optional[int] = None,
    direction: int = 1,
    noise_sigma: float = 0.0,
    mask: Optional[CodedMask] = None,
) -> SystemConfig:
    """SystemConfig with the architecture's own mask family"""
    architecture = Architecture(architecture)
    if mask is None:
        mask = make_mask(architecture.mask_kind, height, width, seed=seed, density=density)
    elif mask.shape != (height, width):
        raise ShapeError(f"mask of shape {mask.shape} does not match scene {height}x{width}")
    dispersion = DispersionSpec(settings.SCI_DISPERSION_STEP if step is None else step, direction)
    return SystemConfig(architecture, mask, dispersion, noise_sigma, wavelengths)
