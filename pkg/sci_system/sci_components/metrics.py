"""
Reconstruction quality metrics: PSNR, SSIM, SAM and a temporal-consistency score
"""
import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional

import numpy as np
from django.conf import settings
from skimage.metrics import structural_similarity

from ..exceptions import ConfigError, ShapeError
from .cube import SpectralCube

logger = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
TEMPORAL_VARIANT = 'block-energy (reduced ST-RRED stand-in, not comparable to published scores)'


def _values(cube) -> np.ndarray:
    values = cube.values if isinstance(cube, SpectralCube) else np.asarray(cube)
    return values.astype(np.float64, copy=False)


def _pair(x, y):
    a, b = _values(x), _values(y)
    if a.shape != b.shape:
        raise ShapeError(f"metric inputs differ in shape: {a.shape} vs {b.shape}")
    if a.ndim != 4:
        raise ShapeError(f"metric inputs must be T x H x W x C, got {a.shape}")
    return a, b


def psnr(x, y, cap: Optional[float] = None) -> float:
    """Frame-wise PSNR on [0, 1] data, averaged over T and capped (100 dB by default)"""
    cap = settings.SCI_PSNR_CAP if cap is None else cap
    a, b = _pair(x, y)
    mse = np.mean((a - b) ** 2, axis=(1, 2, 3))
    with np.errstate(divide='ignore'):
        frames = np.where(mse > 0, 10.0 * np.log10(1.0 / np.maximum(mse, np.finfo(np.float64).tiny)), cap)
    return float(np.mean(np.minimum(frames, cap)))


def ssim(x, y) -> float:
    """
    Mean SSIM over every (frame, channel) plane

    Gaussian 11x11 window (sigma 1.5), K1 = 0.01, K2 = 0.03, data range 1 and
    population covariance.
    """
    a, b = _pair(x, y)
    frames, height, width, channels = a.shape
    if height < SSIM_WINDOW or width < SSIM_WINDOW:
        raise ShapeError(f"SSIM needs H, W >= {SSIM_WINDOW}, got {height}x{width}")
    scores = [
        structural_similarity(
            a[t, :, :, c],
            b[t, :, :, c],
            data_range=1.0,
            gaussian_weights=True,
            sigma=SSIM_SIGMA,
            use_sample_covariance=False,
            K1=0.01,
            K2=0.03,
        )
        for t in range(frames)
        for c in range(channels)
    ]
    return float(np.mean(scores))


def sam(x, y) -> float:
    """
    Mean spectral angle in degrees

    Pixels where either spectrum has zero norm are skipped; each frame is
    averaged over its valid pixels and the result over frames that have any.
    """
    a, b = _pair(x, y)
    norm_a = np.linalg.norm(a, axis=-1)
    norm_b = np.linalg.norm(b, axis=-1)
    valid = (norm_a > 0) & (norm_b > 0)
    if not np.any(valid):
        raise ConfigError("spectral angle undefined: every pixel has a zero-norm spectrum")
    unit_a = np.divide(a, norm_a[..., None], out=np.zeros_like(a), where=valid[..., None])
    unit_b = np.divide(b, norm_b[..., None], out=np.zeros_like(b), where=valid[..., None])
    # half-angle form stays accurate near 0 and 180 degrees
    angles = 2.0 * np.arctan2(
        np.linalg.norm(unit_a - unit_b, axis=-1),
        np.linalg.norm(unit_a + unit_b, axis=-1),
    )
    per_frame = [
        np.degrees(angles[t][valid[t]]).mean()
        for t in range(a.shape[0])
        if np.any(valid[t])
    ]
    return float(np.mean(per_frame))


def _block_energy(differences: np.ndarray, block: int, noise_floor: float) -> np.ndarray:
    steps, height, width, channels = differences.shape
    block_h = block if height >= block else height
    block_w = block if width >= block else width
    rows, cols = height // block_h, width // block_w
    cropped = differences[:, :rows * block_h, :cols * block_w, :]
    blocks = cropped.reshape(steps, rows, block_h, cols, block_w, channels)
    mean_square = np.mean(blocks ** 2, axis=(2, 4))
    return np.log1p(mean_square / noise_floor)


def temporal_score(x, y, block: Optional[int] = None, noise_floor: Optional[float] = None) -> float:
    """
    Temporal inconsistency between two videos (lower is better, 0 for identical)

    Frame differences of both videos are cut into blocks; each block gets the
    log-energy log(1 + mean(D^2) / eps) and the score is the mean absolute gap
    between the two videos' energies over blocks, channels and frame pairs.
    """
    block = block or settings.SCI_TEMPORAL_BLOCK
    noise_floor = noise_floor or settings.SCI_TEMPORAL_NOISE_FLOOR
    a, b = _pair(x, y)
    if a.shape[0] < 2:
        raise ShapeError(f"temporal score needs at least 2 frames, got {a.shape[0]}")
    energy_a = _block_energy(np.diff(a, axis=0), block, noise_floor)
    energy_b = _block_energy(np.diff(b, axis=0), block, noise_floor)
    return float(np.mean(np.abs(energy_a - energy_b)))


@dataclass(frozen=True)
class MetricReport:
    psnr_db: float
    ssim: float
    sam_deg: float
    temporal_score: Optional[float]
    temporal_variant: str = TEMPORAL_VARIANT

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def evaluate(recon, gt) -> MetricReport:
    """All four metrics, frame-wise averaged; temporal_score is None for single-frame cubes"""
    a, _ = _pair(recon, gt)
    report = MetricReport(
        psnr_db=psnr(recon, gt),
        ssim=ssim(recon, gt),
        sam_deg=sam(recon, gt),
        temporal_score=temporal_score(recon, gt) if a.shape[0] >= 2 else None,
    )
    logger.info(
        f"Evaluated {a.shape}: PSNR {report.psnr_db:.3f} dB, SSIM {report.ssim:.4f}, "
        f"SAM {report.sam_deg:.3f} deg, temporal {report.temporal_score}"
    )
    return report
