"""
Synthetic dynamic spectral scenes and the video cropping strategy
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from django.conf import settings

from ..exceptions import ConfigError, ShapeError
from .cube import SpectralCube, default_wavelengths

logger = logging.getLogger(__name__)

ZERO_STEP_PROBABILITY = 0.7


class ObjectShape(str, Enum):
    DISK = 'disk'
    RECTANGLE = 'rectangle'


def gaussian_spectrum(wavelengths: np.ndarray, center: float, width: float, amplitude: float = 1.0) -> np.ndarray:
    return amplitude * np.exp(-0.5 * ((np.asarray(wavelengths) - center) / width) ** 2)


@dataclass(frozen=True)
class SceneObject:
    """
    One moving object with a Gaussian reflectance spectrum

    `velocity` is the integer (row, col) displacement per frame and `rotation`
    the rotation in degrees per frame. A disk uses `radius`, a rectangle
    `half_height` and `half_width`.
    """

    shape: ObjectShape
    center: Tuple[int, int]
    spectrum_center: float
    spectrum_width: float
    amplitude: float = 1.0
    radius: float = 4.0
    half_height: float = 4.0
    half_width: float = 4.0
    velocity: Tuple[int, int] = (0, 0)
    rotation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'shape', ObjectShape(self.shape))
        object.__setattr__(self, 'center', tuple(int(v) for v in self.center))
        object.__setattr__(self, 'velocity', tuple(int(v) for v in self.velocity))
        if not 0.0 <= self.amplitude <= 1.0:
            raise ConfigError(f"object amplitude must lie in [0, 1], got {self.amplitude}")
        if self.spectrum_width <= 0:
            raise ConfigError(f"spectrum width must be positive, got {self.spectrum_width}")
        if min(self.radius, self.half_height, self.half_width) <= 0:
            raise ConfigError("object extents must be positive")

    def center_at(self, frame: int) -> Tuple[int, int]:
        return (self.center[0] + frame * self.velocity[0], self.center[1] + frame * self.velocity[1])

    def footprint(self, frame: int, height: int, width: int) -> np.ndarray:
        """Boolean H x W mask of the object at `frame`, rotated by nearest-neighbor lookup"""
        rows, cols = np.mgrid[0:height, 0:width]
        center_row, center_col = self.center_at(frame)
        d_row = rows - center_row
        d_col = cols - center_col
        angle = math.radians(self.rotation * frame)
        if angle:
            cos_a, sin_a = math.cos(angle), math.sin(angle)
            d_row, d_col = (
                np.rint(cos_a * d_row + sin_a * d_col),
                np.rint(-sin_a * d_row + cos_a * d_col),
            )
        if self.shape is ObjectShape.DISK:
            return d_row ** 2 + d_col ** 2 <= self.radius ** 2
        return (np.abs(d_row) <= self.half_height) & (np.abs(d_col) <= self.half_width)


@dataclass(frozen=True)
class SceneSpec:
    frames: int
    height: int
    width: int
    channels: int
    objects: List[SceneObject] = field(default_factory=list)
    background_center: float = 575.0
    background_width: float = 60.0
    background_amplitude: float = 0.2
    max_displacement: int = 4
    seed: int = 0
    background_texture: float = 0.0

    def __post_init__(self):
        if min(self.frames, self.height, self.width, self.channels) < 1:
            raise ConfigError("scene extents must all be at least 1")
        if not 0.0 <= self.background_amplitude <= 1.0:
            raise ConfigError(f"background amplitude must lie in [0, 1], got {self.background_amplitude}")
        if not 0.0 <= self.background_texture <= 1.0:
            raise ConfigError(f"background texture must lie in [0, 1], got {self.background_texture}")
        object.__setattr__(self, 'objects', list(self.objects))
        for index, obj in enumerate(self.objects):
            if max(abs(v) for v in obj.velocity) > self.max_displacement:
                raise ConfigError(
                    f"object {index} moves {obj.velocity} per frame, above max_displacement {self.max_displacement}"
                )
            for t in range(self.frames):
                row, col = obj.center_at(t)
                if not (0 <= row < self.height and 0 <= col < self.width):
                    raise ConfigError(f"object {index} leaves the frame at t={t}: center ({row}, {col})")

    @property
    def wavelengths(self) -> np.ndarray:
        return default_wavelengths(self.channels, settings.SCI_WAVELENGTH_MIN, settings.SCI_WAVELENGTH_MAX)


def synth_scene(spec: SceneSpec) -> SpectralCube:
    """
    Render the scene: objects composited in list order over the background

    A nonzero background_texture scales the background per pixel by
    1 + texture * u, u ~ U(-1, 1) drawn from the spec seed; the grain is static
    across frames.
    """
    wavelengths = spec.wavelengths
    background = gaussian_spectrum(
        wavelengths, spec.background_center, spec.background_width, spec.background_amplitude
    )
    values = np.broadcast_to(background, (spec.frames, spec.height, spec.width, spec.channels)).copy()
    if spec.background_texture:
        rng = np.random.default_rng(spec.seed)
        grain = 1.0 + spec.background_texture * rng.uniform(-1.0, 1.0, (spec.height, spec.width, 1))
        values *= grain[None]
    for obj in spec.objects:
        spectrum = gaussian_spectrum(wavelengths, obj.spectrum_center, obj.spectrum_width, obj.amplitude)
        for t in range(spec.frames):
            values[t][obj.footprint(t, spec.height, spec.width)] = spectrum
    logger.debug(f"Synthesized scene {values.shape} with {len(spec.objects)} objects")
    return SpectralCube(np.clip(values, 0.0, 1.0), wavelengths)


def _feasible_start(velocity: int, frames: int, extent: int) -> Tuple[int, int]:
    travel = velocity * (frames - 1)
    return max(0, -travel), min(extent - 1, extent - 1 - travel)


def random_scene_spec(
    frames: int,
    height: int,
    width: int,
    channels: int,
    n_objects: int = 3,
    seed: int = 0,
    max_displacement: int = 2,
    background_texture: float = 0.0,
) -> SceneSpec:
    """Draw a valid SceneSpec; equal seeds give equal specs"""
    rng = np.random.default_rng(seed)
    low, high = settings.SCI_WAVELENGTH_MIN, settings.SCI_WAVELENGTH_MAX
    size_low = max(1.0, min(height, width) / 8.0)
    size_high = max(size_low + 1.0, min(height, width) / 4.0)
    objects = []
    for _ in range(n_objects):
        start = []
        velocity = []
        for extent in (height, width):
            step = int(rng.integers(-max_displacement, max_displacement + 1))
            first, last = _feasible_start(step, frames, extent)
            if first > last:
                step, (first, last) = 0, (0, extent - 1)
            velocity.append(step)
            start.append(int(rng.integers(first, last + 1)))
        objects.append(SceneObject(
            shape=ObjectShape.DISK if rng.random() < 0.5 else ObjectShape.RECTANGLE,
            center=tuple(start),
            spectrum_center=float(rng.uniform(low, high)),
            spectrum_width=float(rng.uniform(10.0, 40.0)),
            amplitude=float(rng.uniform(0.5, 1.0)),
            radius=float(rng.uniform(size_low, size_high)),
            half_height=float(rng.uniform(size_low, size_high)),
            half_width=float(rng.uniform(size_low, size_high)),
            velocity=tuple(velocity),
            rotation=float(rng.choice([0.0, 5.0, 10.0, 15.0])),
        ))
    return SceneSpec(
        frames=frames,
        height=height,
        width=width,
        channels=channels,
        objects=objects,
        max_displacement=max_displacement,
        seed=seed,
        background_texture=background_texture,
    )


def draw_crop_step(
    rng: np.random.Generator,
    max_step: int = 2,
    zero_probability: float = ZERO_STEP_PROBABILITY,
) -> Tuple[int, int]:
    """(0, 0) with probability `zero_probability`, otherwise a uniform nonzero offset"""
    if max_step < 1:
        return (0, 0)
    if rng.random() < zero_probability:
        return (0, 0)
    offsets = [
        (d_row, d_col)
        for d_row in range(-max_step, max_step + 1)
        for d_col in range(-max_step, max_step + 1)
        if (d_row, d_col) != (0, 0)
    ]
    return offsets[int(rng.integers(len(offsets)))]


def crop_video(
    cube: SpectralCube,
    out_h: int,
    out_w: int,
    step: Optional[Tuple[int, int]] = None,
    seed: int = 0,
    frames: Optional[int] = None,
    origin: Optional[Tuple[int, int]] = None,
    max_step: int = 2,
    zero_probability: float = ZERO_STEP_PROBABILITY,
) -> SpectralCube:
    """
    Crop a moving out_h x out_w window out of a spectral video

    Frame t is cut from source frame t (or frame 0 of a single-frame source)
    at origin + t * step. Without `step` one offset per video is drawn with
    draw_crop_step; without `origin` a feasible origin is drawn from the seed.

    Args:
        cube: Source video
        out_h, out_w: Window extent
        step: Fixed per-frame (row, col) offset
        seed: Seed of the stochastic choices
        frames: Output length; defaults to the source length
        origin: Fixed top-left corner of frame 0
        max_step: Bound on drawn offsets
        zero_probability: Probability that a drawn offset is (0, 0)

    Returns:
        frames x out_h x out_w x C cube
    """
    rng = np.random.default_rng(seed)
    frames = frames or cube.frames
    if cube.frames > 1 and frames > cube.frames:
        raise ShapeError(f"cannot crop {frames} frames out of a {cube.frames}-frame source")
    if out_h > cube.height or out_w > cube.width or min(out_h, out_w) < 1:
        raise ConfigError(f"crop {out_h}x{out_w} does not fit the {cube.height}x{cube.width} source")
    if step is None:
        step = draw_crop_step(rng, max_step, zero_probability)
    step = tuple(int(v) for v in step)

    travel = [s * (frames - 1) for s in step]
    limits = [
        (max(0, -move), extent - size - max(0, move))
        for move, extent, size in zip(travel, (cube.height, cube.width), (out_h, out_w))
    ]
    if any(first > last for first, last in limits):
        raise ConfigError(f"window escapes source bounds: step {step} over {frames} frames")
    if origin is None:
        origin = tuple(int(rng.integers(first, last + 1)) for first, last in limits)
    origin = tuple(int(v) for v in origin)
    for value, (first, last) in zip(origin, limits):
        if not first <= value <= last:
            raise ConfigError(f"window escapes source bounds: origin {origin} with step {step}")

    output = np.empty((frames, out_h, out_w, cube.channels), dtype=cube.dtype)
    for t in range(frames):
        source = cube.values[t if cube.frames > 1 else 0]
        row, col = origin[0] + t * step[0], origin[1] + t * step[1]
        output[t] = source[row:row + out_h, col:col + out_w]
    logger.debug(f"Cropped {frames} frames of {out_h}x{out_w} from origin {origin} with step {step}")
    return SpectralCube(output, cube.wavelengths)
