"""
Progressive spectral video reconstruction network, forward pass only

    measurement -> MGDP -> embed -> N1 CDPB -> down -> N2 CDPB -> up (+skip)
                -> fuse -> N3 CDPB -> head (+expanded measurement) -> clamp

Weights are seeded uniform(-1/sqrt(C_in), 1/sqrt(C_in)); there is no training.
"""
import logging
import math
import time
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from django.conf import settings
from einops import rearrange
from torch import nn

from ..exceptions import ConfigError, NumericalError, ShapeError
from .attention import AttentionConfig, CDPAWeights, MacCounter, Ordering, cdpa
from .cube import MeasurementSequence, SpectralCube
from .flops import FlopReport
from .optics import SystemConfig, encode_frame, shift_mask

logger = logging.getLogger(__name__)


class MDFFNVariant(str, Enum):
    FULL = 'full'
    SPATIAL_ONLY = 'spatial-only'
    TEMPORAL_ONLY = 'temporal-only'
    REGULAR_CONV3D = 'regular-conv3d'


def _uniform(weight: torch.Tensor, fan_in: int, generator: torch.Generator) -> None:
    bound = 1.0 / math.sqrt(fan_in)
    weight.uniform_(-bound, bound, generator=generator)


def _parameter(*shape, device=None, dtype=torch.float64) -> nn.Parameter:
    return nn.Parameter(torch.empty(*shape, device=device, dtype=dtype))


# --- MGDP -----------------------------------------------------------------

def degradation_volume(config: SystemConfig) -> np.ndarray:
    """
    H x W x C mask volume seen by each channel

    Single-disperser systems modulate before the shear, so every channel sees
    the mask itself; dual-disperser systems see the sheared mask.
    """
    if config.architecture.single_disperser:
        return np.repeat(config.mask.transmission[:, :, None], config.channels, axis=2)
    return shift_mask(config.mask, config.dispersion, config.channels)


def expand_to_cube(values: torch.Tensor, config: SystemConfig) -> torch.Tensor:
    """
    ... x H x W' -> ... x H x W x C, divided by C

    Single-disperser measurements are cropped per channel at that channel's
    dispersion offset; dual-disperser measurements are replicated.
    """
    if values.shape[-1] != config.width_prime:
        raise ShapeError(f"width {values.shape[-1]} does not match the system's W' = {config.width_prime}")
    channels, width = config.channels, config.width
    if config.architecture.single_disperser:
        offsets = config.dispersion.sheared_offsets(channels)
        expanded = torch.stack([values[..., int(o):int(o) + width] for o in offsets], dim=-1)
    else:
        expanded = values.unsqueeze(-1).expand(*values.shape, channels)
    return expanded / channels


def mgdp_degradation(config: SystemConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    (Phi, Phi_p) for a system

    Phi_s = Psi(1) / C compresses the mask volume the way the system compresses
    a scene; Phi_p expands it back to H x W x C, so Phi == Phi_p for an open
    mask without dispersion.
    """
    phi = degradation_volume(config)
    compressed = encode_frame(np.ones((config.height, config.width, config.channels)), config)
    phi_p = expand_to_cube(torch.from_numpy(compressed), config).numpy()
    return phi, phi_p


class MGDP(nn.Module):
    """Mask-guided degradation perception front end: T x H x W' -> T x H x W x 2C"""

    def __init__(self, channels: int, device=None, dtype=torch.float64):
        super().__init__()
        self.channels = channels
        self.weight_conv = _parameter(channels, channels, device=device, dtype=dtype)
        self.weight_bias = _parameter(channels, device=device, dtype=dtype)
        self.fuse_conv = _parameter(channels, channels, device=device, dtype=dtype)
        self.fuse_bias = _parameter(channels, device=device, dtype=dtype)

    def reset_parameters(self, generator: torch.Generator) -> None:
        with torch.no_grad():
            # W_phi starts at sigmoid(0) = 0.5 everywhere
            self.weight_conv.zero_()
            self.weight_bias.zero_()
            _uniform(self.fuse_conv, self.channels, generator)
            _uniform(self.fuse_bias, self.channels, generator)

    def perception_weights(self, phi: torch.Tensor, phi_p: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(F.linear(phi - phi_p, self.weight_conv, self.weight_bias))

    def forward(self, y_expanded: torch.Tensor, phi: torch.Tensor, phi_p: torch.Tensor) -> torch.Tensor:
        weighted = self.perception_weights(phi, phi_p) * y_expanded
        features = F.linear(weighted, self.fuse_conv, self.fuse_bias)
        return torch.cat([features, y_expanded], dim=-1)


@torch.no_grad()
def mgdp(meas: MeasurementSequence, config: SystemConfig, weights: MGDP) -> torch.Tensor:
    """T x H x W x 2C features: Concat(conv(W_phi * F_m(Y)), F_m(Y))"""
    if meas.values.shape[1:] != (config.height, config.width_prime):
        raise ShapeError(
            f"measurement of shape {meas.shape} does not match system (H, W') = {(config.height, config.width_prime)}"
        )
    if weights.channels != config.channels:
        raise ShapeError(f"MGDP weights are sized for {weights.channels} channels, system has {config.channels}")
    phi, phi_p = (torch.from_numpy(v) for v in mgdp_degradation(config))
    y_expanded = expand_to_cube(torch.as_tensor(meas.values, dtype=torch.float64), config)
    return weights(y_expanded, phi, phi_p)


# --- MDFFN ----------------------------------------------------------------

def spatial_depthwise(z: torch.Tensor, weight: torch.Tensor) -> torch.Tensor:
    planes = rearrange(z, 't h w c -> t c h w')
    planes = F.pad(planes, (1, 1, 1, 1), mode='replicate')
    return rearrange(F.conv2d(planes, weight, groups=planes.shape[1]), 't c h w -> t h w c')


def temporal_depthwise(z: torch.Tensor, weight: torch.Tensor) -> torch.Tensor:
    height = z.shape[1]
    series = rearrange(z, 't h w c -> (h w) c t')
    series = F.pad(series, (1, 1), mode='replicate')
    filtered = F.conv1d(series, weight, groups=series.shape[1])
    return rearrange(filtered, '(h w) c t -> t h w c', h=height)


def dense_conv3d(z: torch.Tensor, weight: torch.Tensor) -> torch.Tensor:
    volume = rearrange(z, 't h w c -> 1 c t h w')
    volume = F.pad(volume, (1, 1, 1, 1, 1, 1), mode='replicate')
    return rearrange(F.conv3d(volume, weight), '1 c t h w -> t h w c')


def self_gate(z: torch.Tensor) -> torch.Tensor:
    return z * torch.sigmoid(z)


class MDFFN(nn.Module):
    """
    Multi-domain feed-forward network

    full: the normalized channels are split into a spatial head and a temporal
    head of C/2 each; each is expanded to C, filtered depthwise (3x3 over H, W or
    3 taps over T), self-gated, and both are projected back to C.
    spatial-only / temporal-only: a single head expanded to 2C with one filter.
    regular-conv3d: a single head with a dense 3x3x3 convolution.
    """

    def __init__(self, channels: int, variant=MDFFNVariant.FULL, device=None, dtype=torch.float64):
        super().__init__()
        variant = MDFFNVariant(variant)
        if variant is MDFFNVariant.FULL and channels % 2:
            raise ConfigError(f"the full MDFFN splits channels in two heads; {channels} is odd")
        factory = {'device': device, 'dtype': dtype}
        self.channels = channels
        self.variant = variant
        self.norm = nn.LayerNorm(channels, **factory)
        if variant is MDFFNVariant.FULL:
            half = channels // 2
            self.expand_spatial = _parameter(channels, half, **factory)
            self.expand_temporal = _parameter(channels, half, **factory)
            self.spatial_filter = _parameter(channels, 1, 3, 3, **factory)
            self.temporal_filter = _parameter(channels, 1, 3, **factory)
        else:
            self.expand = _parameter(2 * channels, channels, **factory)
            if variant is MDFFNVariant.SPATIAL_ONLY:
                self.spatial_filter = _parameter(2 * channels, 1, 3, 3, **factory)
            elif variant is MDFFNVariant.TEMPORAL_ONLY:
                self.temporal_filter = _parameter(2 * channels, 1, 3, **factory)
            else:
                self.dense_filter = _parameter(2 * channels, 2 * channels, 3, 3, 3, **factory)
        self.project = _parameter(channels, 2 * channels, **factory)

    def reset_parameters(self, generator: torch.Generator) -> None:
        with torch.no_grad():
            self.norm.reset_parameters()
            for weight in self.parameters(recurse=False):
                _uniform(weight, self.channels, generator)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return mdffn(x, self)


@torch.no_grad()
def mdffn(x: torch.Tensor, weights: MDFFN) -> torch.Tensor:
    if x.ndim != 4 or x.shape[-1] != weights.channels:
        raise ShapeError(f"MDFFN input {tuple(x.shape)} does not match {weights.channels} channels")
    u = F.layer_norm(x, (weights.channels,), weights.norm.weight, weights.norm.bias)
    variant = weights.variant
    if variant is MDFFNVariant.FULL:
        half = weights.channels // 2
        spatial = spatial_depthwise(F.linear(u[..., :half], weights.expand_spatial), weights.spatial_filter)
        temporal = temporal_depthwise(F.linear(u[..., half:], weights.expand_temporal), weights.temporal_filter)
        hidden = torch.cat([self_gate(spatial), self_gate(temporal)], dim=-1)
    else:
        z = F.linear(u, weights.expand)
        if variant is MDFFNVariant.SPATIAL_ONLY:
            z = spatial_depthwise(z, weights.spatial_filter)
        elif variant is MDFFNVariant.TEMPORAL_ONLY:
            z = temporal_depthwise(z, weights.temporal_filter)
        else:
            z = dense_conv3d(z, weights.dense_filter)
        hidden = self_gate(z)
    return x + F.linear(hidden, weights.project)


# --- assembly -------------------------------------------------------------

class CDPB(nn.Module):
    """Cross-domain propagated block: CDPA followed by MDFFN"""

    def __init__(self, channels: int, heads: int, variant=MDFFNVariant.FULL, device=None, dtype=torch.float64):
        super().__init__()
        self.attention = CDPAWeights(channels, heads, device=device, dtype=dtype)
        self.feed_forward = MDFFN(channels, variant, device=device, dtype=dtype)

    def reset_parameters(self, generator: torch.Generator) -> None:
        self.attention.reset_parameters(generator)
        self.feed_forward.reset_parameters(generator)

    def forward(self, x, config: AttentionConfig, ordering=Ordering.ST_PROPAGATED, counter=None):
        return mdffn(cdpa(x, self.attention, config, ordering, counter), self.feed_forward)


def _pad_even(planes: torch.Tensor) -> torch.Tensor:
    height, width = planes.shape[-2:]
    if height % 2 or width % 2:
        planes = F.pad(planes, (0, width % 2, 0, height % 2), mode='replicate')
    return planes


class PGSVRT(nn.Module):
    """
    U-shaped reconstruction network for one encoding system

    The module's state_dict is the full weight set; the mask-derived Phi and
    Phi_p maps are non-persistent buffers rebuilt from the system.
    """

    def __init__(
        self,
        system: SystemConfig,
        frames: int,
        depth: Optional[Sequence[int]] = None,
        heads: Optional[int] = None,
        h_win: Optional[int] = None,
        w_win: Optional[int] = None,
        n_bridged: Optional[int] = -1,
        variant=MDFFNVariant.FULL,
        ordering=Ordering.ST_PROPAGATED,
        device=None,
        dtype=torch.float64,
    ):
        super().__init__()
        depth = tuple(depth or settings.SCI_DEPTH)
        if len(depth) != 3 or min(depth) < 0:
            raise ConfigError(f"depth must be three nonnegative block counts, got {depth}")
        channels = system.channels
        self.system = system
        self.frames = frames
        self.depth = depth
        self.ordering = Ordering(ordering)
        self.attention_config = AttentionConfig(
            channels, frames, system.height, system.width, h_win, w_win, n_bridged, heads
        )
        heads = self.attention_config.heads
        factory = {'device': device, 'dtype': dtype}
        wide = 2 * channels

        phi, phi_p = mgdp_degradation(system)
        self.register_buffer('phi', torch.from_numpy(phi).to(**factory), persistent=False)
        self.register_buffer('phi_p', torch.from_numpy(phi_p).to(**factory), persistent=False)

        self.mgdp = MGDP(channels, **factory)
        self.embed = _parameter(channels, wide, **factory)
        self.embed_bias = _parameter(channels, **factory)
        self.encoder = nn.ModuleList(CDPB(channels, heads, variant, **factory) for _ in range(depth[0]))
        self.down = _parameter(wide, channels, 2, 2, **factory)
        self.down_bias = _parameter(wide, **factory)
        self.bottleneck = nn.ModuleList(CDPB(wide, heads, variant, **factory) for _ in range(depth[1]))
        self.up = _parameter(wide, channels, 2, 2, **factory)
        self.up_bias = _parameter(channels, **factory)
        self.fuse = _parameter(channels, wide, **factory)
        self.fuse_bias = _parameter(channels, **factory)
        self.decoder = nn.ModuleList(CDPB(channels, heads, variant, **factory) for _ in range(depth[2]))
        self.head = _parameter(channels, channels, **factory)
        self.head_bias = _parameter(channels, **factory)

    def reset_parameters(self, seed: int) -> None:
        generator = torch.Generator().manual_seed(seed)
        channels = self.system.channels
        self.mgdp.reset_parameters(generator)
        with torch.no_grad():
            for weight, fan_in in (
                (self.embed, 2 * channels), (self.embed_bias, 2 * channels),
                (self.down, channels), (self.down_bias, channels),
                (self.up, 2 * channels), (self.up_bias, 2 * channels),
                (self.fuse, 2 * channels), (self.fuse_bias, 2 * channels),
                (self.head, channels), (self.head_bias, channels),
            ):
                _uniform(weight, fan_in, generator)
        for block in (*self.encoder, *self.bottleneck, *self.decoder):
            block.reset_parameters(generator)
        self.requires_grad_(False)

    def _run_blocks(self, x, blocks, config, flop_reports, totals):
        for block in blocks:
            counter = MacCounter() if flop_reports is not None else None
            x = block(x, config, self.ordering, counter)
            if flop_reports is not None:
                flop_reports.append(FlopReport.from_counter(counter))
                totals.merge(counter)
        return x

    @torch.no_grad()
    def forward(self, y: torch.Tensor, flop_reports: Optional[List[FlopReport]] = None) -> torch.Tensor:
        """T x H x W' measurement tensor -> T x H x W x C cube tensor in [0, 1]"""
        system = self.system
        frames, height, width = y.shape[0], system.height, system.width
        if y.shape[1:] != (height, system.width_prime):
            raise ShapeError(f"measurement {tuple(y.shape)} does not match the network's system")
        totals = MacCounter()
        full = self.attention_config.at_scale(system.channels, frames, height, width)
        half = self.attention_config.at_scale(2 * system.channels, frames, (height + 1) // 2, (width + 1) // 2)

        y_expanded = expand_to_cube(y, system)
        x = F.linear(self.mgdp(y_expanded, self.phi, self.phi_p), self.embed, self.embed_bias)
        x = self._run_blocks(x, self.encoder, full, flop_reports, totals)
        skip = x

        planes = _pad_even(rearrange(x, 't h w c -> t c h w'))
        planes = F.conv2d(planes, self.down, self.down_bias, stride=2)
        x = self._run_blocks(rearrange(planes, 't c h w -> t h w c'), self.bottleneck, half, flop_reports, totals)

        planes = F.conv_transpose2d(rearrange(x, 't h w c -> t c h w'), self.up, self.up_bias, stride=2)
        x = rearrange(planes, 't c h w -> t h w c')[:, :height, :width, :]
        x = F.linear(torch.cat([x, skip], dim=-1), self.fuse, self.fuse_bias)
        x = self._run_blocks(x, self.decoder, full, flop_reports, totals)

        if flop_reports is not None:
            logger.info(f"CDPA MACs over {len(flop_reports)} blocks: {totals.total:,}")
        x = F.linear(x, self.head, self.head_bias) + y_expanded
        return torch.clamp(x, 0.0, 1.0)

    def weight_arrays(self) -> Dict[str, np.ndarray]:
        return {name: tensor.detach().cpu().numpy() for name, tensor in self.state_dict().items()}

    def load_weight_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        expected = set(self.state_dict())
        if set(arrays) != expected:
            missing = sorted(expected - set(arrays))
            extra = sorted(set(arrays) - expected)
            raise ConfigError(f"weight bundle does not fit this network: missing {missing[:5]}, unexpected {extra[:5]}")
        self.load_state_dict({name: torch.from_numpy(np.asarray(values)) for name, values in arrays.items()})
        self.requires_grad_(False)


def build_pgsvrt(system: SystemConfig, frames: int, seed: int = 0, device=None, **options) -> PGSVRT:
    """Network for `system` with seeded weights; on the meta device weights stay uninitialized"""
    network = PGSVRT(system, frames, device=device, **options)
    if network.phi.device.type != 'meta':
        network.reset_parameters(seed)
    else:
        network.requires_grad_(False)
    logger.info(
        f"Built PG-SVRT for {system.architecture.value}: C={system.channels}, depth {network.depth}, "
        f"window {network.attention_config.h_win}x{network.attention_config.w_win}, "
        f"N_B={network.attention_config.n_bridged}, seed {seed}"
    )
    return network


def pgsvrt_forward(
    meas: MeasurementSequence,
    config: SystemConfig,
    weights: PGSVRT,
    flop_reports: Optional[List[FlopReport]] = None,
) -> SpectralCube:
    """
    Reconstruct a spectral video with a PGSVRT network

    Args:
        meas: T x H x W' measurement
        config: System the measurement came from; must match the network's
        weights: Network built for that system
        flop_reports: Optional list receiving one FlopReport per CDPB

    Returns:
        T x H x W x C cube with values in [0, 1]
    """
    if weights.system is not config and (
        weights.system.architecture is not config.architecture
        or weights.system.mask.shape != config.mask.shape
        or weights.system.channels != config.channels
    ):
        raise ConfigError("network weights were built for a different encoding system")
    start_time = time.time()
    y = torch.as_tensor(meas.values, dtype=torch.float64)
    output = weights(y, flop_reports=flop_reports)
    if not torch.isfinite(output).all():
        raise NumericalError("network output contains non-finite values")
    logger.info(f"PG-SVRT forward on {meas.shape} in {time.time() - start_time:.3f}s")
    return SpectralCube(output.numpy(), config.wavelengths)


def pgsvrt_output_shape(system: SystemConfig, frames: int, depth: Sequence[int], **options) -> Tuple[int, ...]:
    """Run the network on the meta device and return the output shape; nothing is computed"""
    network = build_pgsvrt(system, frames, device='meta', depth=depth, **options)
    y = torch.empty(frames, system.height, system.width_prime, dtype=torch.float64, device='meta')
    return tuple(network(y).shape)
