"""
Binary storage for cubes, measurements, masks and weight bundles, plus PNG export

All three formats share one little-endian header scheme:

    magic      4 bytes   b"SCUB" | b"SMES" | b"STEN"
    version    u16
    dtype      u8        1 = float32, 2 = float64
    extents    u32 ...   SCUB: T,H,W,C   SMES: T,H,W'   STEN: rank (u8) then rank x u32
    (SCUB only) C wavelengths as f64
    payload    row-major values of the declared dtype
"""
import json
import logging
import os
import struct
import time
from pathlib import Path
from typing import Dict, Union

import numpy as np
from PIL import Image
from django.conf import settings

from ..exceptions import ConfigError, CubeFormatError, ShapeError
from .cube import MAX_RANK, CodedMask, MaskKind, MeasurementSequence, SpectralCube

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

FORMAT_VERSION = 1
CUBE_MAGIC = b'SCUB'
MEASUREMENT_MAGIC = b'SMES'
TENSOR_MAGIC = b'STEN'

DTYPE_CODES = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
CODE_DTYPES = {code: dtype.newbyteorder('<') for dtype, code in DTYPE_CODES.items()}

_PREFIX = struct.Struct('<4sHB')


def _write_atomic(path: Path, chunks) -> None:
    path = Path(path)
    tmp_path = path.with_name(path.name + '.part')
    try:
        with open(tmp_path, 'wb') as handle:
            for chunk in chunks:
                handle.write(chunk)
        os.replace(tmp_path, path)
    except OSError as e:
        tmp_path.unlink(missing_ok=True)
        logger.error(f"Failed to write {path}: {e}")
        raise


def _dtype_code(values: np.ndarray) -> int:
    try:
        return DTYPE_CODES[values.dtype]
    except KeyError:
        raise CubeFormatError(f"unsupported dtype {values.dtype}") from None


def _read_prefix(blob: bytes, expected_magic: bytes, path) -> tuple:
    if len(blob) < _PREFIX.size:
        raise CubeFormatError(f"unrecognized format: {path}")
    magic, version, code = _PREFIX.unpack_from(blob, 0)
    if magic != expected_magic:
        raise CubeFormatError(f"unrecognized format: {path}")
    if version != FORMAT_VERSION:
        raise CubeFormatError(f"unsupported format version {version}: {path}")
    if code not in CODE_DTYPES:
        raise CubeFormatError(f"unknown dtype code {code}: {path}")
    return CODE_DTYPES[code], _PREFIX.size


def _read_payload(blob: bytes, offset: int, dtype: np.dtype, shape, path) -> np.ndarray:
    count = int(np.prod(shape, dtype=np.int64))
    expected = count * dtype.itemsize
    if len(blob) - offset != expected:
        raise CubeFormatError(
            f"payload length mismatch: {path} holds {len(blob) - offset} bytes, header declares {expected}"
        )
    values = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(shape)
    return values.astype(dtype.newbyteorder('='))


def save_cube(cube: SpectralCube, path: PathLike) -> None:
    """
    Write a spectral cube in the SCUB format

    Args:
        cube: Cube to store; float32 and float64 payloads are kept as they are
        path: Destination file
    """
    start_time = time.time()
    values = cube.values
    header = _PREFIX.pack(CUBE_MAGIC, FORMAT_VERSION, _dtype_code(values))
    header += struct.pack('<4I', *values.shape)
    header += cube.wavelengths.astype('<f8').tobytes()
    payload = values.astype(values.dtype.newbyteorder('<'), copy=False).tobytes(order='C')
    _write_atomic(path, (header, payload))
    logger.info(f"Saved cube {values.shape} ({values.dtype}) to {path} in {time.time() - start_time:.3f}s")


def load_cube(path: PathLike, dtype=None) -> SpectralCube:
    """
    Read a SCUB file

    Args:
        path: Source file
        dtype: Optional target dtype; float32 payloads widen exactly to float64

    Returns:
        SpectralCube with the stored (or requested) dtype
    """
    blob = Path(path).read_bytes()
    stored_dtype, offset = _read_prefix(blob, CUBE_MAGIC, path)
    if len(blob) < offset + 16:
        raise CubeFormatError(f"unrecognized format: {path}")
    shape = struct.unpack_from('<4I', blob, offset)
    offset += 16
    channels = shape[3]
    if len(blob) < offset + 8 * channels:
        raise CubeFormatError(f"payload length mismatch: {path} is shorter than its wavelength table")
    wavelengths = np.frombuffer(blob, dtype='<f8', count=channels, offset=offset).astype(np.float64)
    offset += 8 * channels
    values = _read_payload(blob, offset, stored_dtype, shape, path)
    if dtype is not None:
        values = values.astype(dtype)
    logger.debug(f"Loaded cube {shape} from {path}")
    return SpectralCube(values, wavelengths)


def save_measurement(meas: MeasurementSequence, path: PathLike) -> None:
    """Write a measurement sequence in the SMES format"""
    values = meas.values
    header = _PREFIX.pack(MEASUREMENT_MAGIC, FORMAT_VERSION, _dtype_code(values))
    header += struct.pack('<3I', *values.shape)
    payload = values.astype(values.dtype.newbyteorder('<'), copy=False).tobytes(order='C')
    _write_atomic(path, (header, payload))
    logger.info(f"Saved measurement {values.shape} to {path}")


def load_measurement(path: PathLike, dtype=None) -> MeasurementSequence:
    """Read an SMES file"""
    blob = Path(path).read_bytes()
    stored_dtype, offset = _read_prefix(blob, MEASUREMENT_MAGIC, path)
    if len(blob) < offset + 12:
        raise CubeFormatError(f"unrecognized format: {path}")
    shape = struct.unpack_from('<3I', blob, offset)
    values = _read_payload(blob, offset + 12, stored_dtype, shape, path)
    if dtype is not None:
        values = values.astype(dtype)
    return MeasurementSequence(values)


def save_mask(mask: CodedMask, path: PathLike) -> None:
    """Masks are stored as single-frame, single-channel SCUB cubes"""
    cube = SpectralCube(mask.transmission[None, :, :, None], np.zeros(1))
    save_cube(cube, path)


def load_mask(path: PathLike, kind: Union[MaskKind, str] = MaskKind.RANDOM_BINARY) -> CodedMask:
    cube = load_cube(path, dtype=np.float64)
    if cube.frames != 1 or cube.channels != 1:
        raise ShapeError(f"mask file {path} must hold one frame and one channel, found {cube.shape}")
    return CodedMask(cube.values[0, :, :, 0], kind)


def save_tensor(values: np.ndarray, path: PathLike) -> None:
    """Write an array of rank <= 5 in the STEN format"""
    values = np.ascontiguousarray(values)
    if values.ndim > MAX_RANK:
        raise ShapeError(f"rank {values.ndim} exceeds the supported maximum of {MAX_RANK}")
    header = _PREFIX.pack(TENSOR_MAGIC, FORMAT_VERSION, _dtype_code(values))
    header += struct.pack('<B', values.ndim)
    header += struct.pack(f'<{values.ndim}I', *values.shape)
    payload = values.astype(values.dtype.newbyteorder('<'), copy=False).tobytes(order='C')
    _write_atomic(path, (header, payload))


def load_tensor(path: PathLike) -> np.ndarray:
    blob = Path(path).read_bytes()
    stored_dtype, offset = _read_prefix(blob, TENSOR_MAGIC, path)
    if len(blob) < offset + 1:
        raise CubeFormatError(f"unrecognized format: {path}")
    (rank,) = struct.unpack_from('<B', blob, offset)
    offset += 1
    if rank > MAX_RANK or len(blob) < offset + 4 * rank:
        raise CubeFormatError(f"unrecognized format: {path}")
    shape = struct.unpack_from(f'<{rank}I', blob, offset)
    return _read_payload(blob, offset + 4 * rank, stored_dtype, shape, path)


def save_weight_bundle(arrays: Dict[str, np.ndarray], directory: PathLike) -> Path:
    """
    Write named arrays as one STEN file each plus a manifest.json naming them

    Args:
        arrays: Mapping of array name to array (e.g. a module state dict as numpy)
        directory: Bundle directory, created if missing

    Returns:
        Path of the manifest
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for index, (name, values) in enumerate(sorted(arrays.items())):
        values = np.asarray(values)
        file_name = f"{index:04d}.sten"
        # scalars are stored as rank-1 so every record has at least one extent
        save_tensor(values.reshape(values.shape or (1,)), directory / file_name)
        manifest[name] = {
            'file': file_name,
            'shape': list(values.shape),
            'dtype': str(values.dtype),
        }
    manifest_path = directory / 'manifest.json'
    manifest_path.write_text(json.dumps(manifest, indent=2))
    logger.info(f"Saved weight bundle with {len(manifest)} arrays to {directory}")
    return manifest_path


def load_weight_bundle(directory: PathLike) -> Dict[str, np.ndarray]:
    directory = Path(directory)
    manifest_path = directory / 'manifest.json'
    if not manifest_path.exists():
        raise FileNotFoundError(f"weight bundle manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    arrays = {}
    for name, entry in manifest.items():
        values = load_tensor(directory / entry['file'])
        arrays[name] = values.reshape(entry['shape'])
    return arrays


def _band_weights(wavelengths: np.ndarray, center: float, width: float) -> np.ndarray:
    weights = np.exp(-0.5 * ((wavelengths - center) / width) ** 2)
    total = weights.sum()
    if total <= 0.0:
        raise ConfigError(f"no band near {center} nm carries weight")
    return weights / total


def pseudo_rgb(cube: SpectralCube, frame: int, centers=(610.0, 550.0, 465.0), width: float = 30.0) -> np.ndarray:
    """
    Render one frame as an H x W x 3 uint8 image

    R/G/B are Gaussian-weighted channel averages around `centers`. The three
    planes share one min-max range; a flat image renders clip(v, 0, 1) * 255.
    """
    if not 0 <= frame < cube.frames:
        raise ConfigError(f"frame {frame} out of range for a {cube.frames}-frame cube")
    if cube.channels < 3:
        raise ConfigError(f"pseudo-RGB needs at least 3 spectral channels, cube has {cube.channels}")
    values = cube.values[frame].astype(np.float64)
    planes = np.stack(
        [values @ _band_weights(cube.wavelengths, center, width) for center in centers],
        axis=-1,
    )
    low, high = planes.min(), planes.max()
    if high - low > 0.0:
        scaled = (planes - low) / (high - low)
    else:
        scaled = np.clip(planes, 0.0, 1.0)
    return np.round(scaled * 255.0).astype(np.uint8)


def export_pseudo_rgb(cube: SpectralCube, frame: int, path: PathLike, centers=None, width: float = None) -> None:
    """Write a pseudo-RGB PNG of one cube frame"""

    image = pseudo_rgb(
        cube,
        frame,
        centers=centers or settings.SCI_RGB_CENTERS,
        width=width or settings.SCI_RGB_WIDTH_NM,
    )
    Image.fromarray(image).save(path, format='PNG')
    logger.info(f"Exported pseudo-RGB frame {frame} to {path}")


def save_measurement_preview(rows, path: PathLike, frame: int = 0) -> None:
    """
    Write a grayscale montage of measurement frames, one row per sequence

    Args:
        rows: Iterable of MeasurementSequence; narrower rows are right-padded with black
        path: PNG destination
        frame: Which frame of each sequence to show
    """
    images = []
    for meas in rows:
        image = meas.values[frame].astype(np.float64)
        span = image.max() - image.min()
        image = (image - image.min()) / span if span > 0 else np.zeros_like(image)
        images.append(image)
    if not images:
        raise ConfigError("no measurements to preview")
    width = max(image.shape[1] for image in images)
    padded = [np.pad(image, ((0, 0), (0, width - image.shape[1]))) for image in images]
    montage = np.round(np.concatenate(padded, axis=0) * 255.0).astype(np.uint8)
    Image.fromarray(montage).save(path, format='PNG')
