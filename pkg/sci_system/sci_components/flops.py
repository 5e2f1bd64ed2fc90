"""
Multiply-accumulate accounting for CDPA

Closed form for one layer on a T x H x W x C map:

    projection          4 T H W C^2        Q, K, V and the output map W_o
    bridged attention   4 T H W N_B C      two attentions through N_B tokens
    temporal attention  2 T^2 H W C        per-pixel attention over all frames

Plain windowed attention replaces the middle term by 2 T H W (h_win w_win) C.
GConv, pooling and softmax exponentials are not counted.
"""
import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict

import torch

from .attention import (
    BRIDGED_ATTENTION,
    PROJECTION,
    TEMPORAL_ATTENTION,
    AttentionConfig,
    CDPAWeights,
    MacCounter,
    Ordering,
    cdpa,
)

logger = logging.getLogger(__name__)

REDUCES = 'reduces'
BREAKS_EVEN = 'breaks even'
EXCEEDS = 'exceeds'


@dataclass(frozen=True)
class FlopReport:
    projection_macs: int
    bridged_attention_macs: int
    temporal_attention_macs: int

    @property
    def total_macs(self) -> int:
        return self.projection_macs + self.bridged_attention_macs + self.temporal_attention_macs

    @classmethod
    def from_counter(cls, counter: MacCounter) -> "FlopReport":
        return cls(counter[PROJECTION], counter[BRIDGED_ATTENTION], counter[TEMPORAL_ATTENTION])

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['total_macs'] = self.total_macs
        return data


def _spatial_term(config: AttentionConfig, height: int, width: int) -> int:
    tokens = config.frames * height * width
    if config.n_bridged is None:
        return 2 * tokens * config.window_tokens * config.channels
    return 4 * tokens * config.n_bridged * config.channels


def flops_cdpa(config: AttentionConfig) -> FlopReport:
    """Closed-form MAC terms on the config's own H and W"""
    t, h, w, c = config.frames, config.height, config.width, config.channels
    return FlopReport(
        projection_macs=4 * t * h * w * c * c,
        bridged_attention_macs=_spatial_term(config, h, w),
        temporal_attention_macs=2 * t * t * h * w * c,
    )


def instrumented_flops_cdpa(config: AttentionConfig, ordering=Ordering.ST_PROPAGATED, device='meta') -> FlopReport:
    """
    Count MACs by running one CDPA layer with a MacCounter attached

    On the default `meta` device nothing is computed; counts depend only on
    shapes. Spatial attention is counted on the window-padded map, so the
    result equals flops_cdpa whenever the window divides H and W.
    """
    weights = CDPAWeights(config.channels, config.heads, device=device)
    if torch.device(device).type != 'meta':
        weights.reset_parameters(torch.Generator().manual_seed(0))
    x = torch.zeros(config.frames, config.height, config.width, config.channels, dtype=torch.float64, device=device)
    counter = MacCounter()
    cdpa(x, weights, config, ordering, counter)
    report = FlopReport.from_counter(counter)
    logger.debug(f"Instrumented CDPA {config}: {report}")
    return report


def flops_window_attention_reference(config: AttentionConfig) -> int:
    """Total MACs of the same layer with plain windowed attention in place of bridged tokens"""
    t, h, w, c = config.frames, config.height, config.width, config.channels
    return 4 * t * h * w * c * c + 2 * t * h * w * config.window_tokens * c + 2 * t * t * h * w * c


def reduction_verdict(config: AttentionConfig) -> str:
    """
    'reduces' iff 2 N_B < h_win * w_win, 'breaks even' at equality, else 'exceeds'

    Plain windowed attention (n_bridged None) is the reference itself, so the
    comparison is the reference against itself and always 'breaks even'.
    """
    if config.n_bridged is None:
        return BREAKS_EVEN
    doubled = 2 * config.n_bridged
    if doubled < config.window_tokens:
        return REDUCES
    if doubled == config.window_tokens:
        return BREAKS_EVEN
    return EXCEEDS
