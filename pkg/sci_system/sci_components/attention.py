"""
Cross-domain propagated attention (CDPA)

Tensors are channels-last, T x H x W x C, float64. Spatial attention runs
inside non-overlapping h_win x w_win windows and is routed through N_B bridged
tokens pooled from the queries; temporal attention runs per pixel across all
frames and reuses the spatial output as its value.

Every function also runs on torch's `meta` device, where no arithmetic takes
place but shapes and multiply-accumulate counts are still produced.
"""
import logging
import math
import threading
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import torch
import torch.nn.functional as F
from django.conf import settings
from einops import rearrange
from torch import nn

from ..exceptions import ConfigError, NumericalError, ShapeError

logger = logging.getLogger(__name__)

PROJECTION = 'projection'
BRIDGED_ATTENTION = 'bridged_attention'
TEMPORAL_ATTENTION = 'temporal_attention'


class Ordering(str, Enum):
    ST_PROPAGATED = 'S-T w/ P'
    ST = 'S-T'
    TS_PROPAGATED = 'T-S w/ P'
    TS = 'T-S'
    PARALLEL = 'Parallel'


@dataclass(frozen=True)
class AttentionConfig:
    """
    Geometry of one CDPA layer

    `n_bridged = None` selects plain windowed attention without bridged tokens.
    `height`/`width` are the feature-map extent the accounting is made for.
    """

    channels: int
    frames: int
    height: int
    width: int
    h_win: Optional[int] = None
    w_win: Optional[int] = None
    n_bridged: Optional[int] = -1
    heads: Optional[int] = None

    def __post_init__(self):
        if self.h_win is None:
            object.__setattr__(self, 'h_win', settings.SCI_WINDOW_HEIGHT)
        if self.w_win is None:
            object.__setattr__(self, 'w_win', settings.SCI_WINDOW_WIDTH)
        if self.n_bridged == -1:
            object.__setattr__(self, 'n_bridged', settings.SCI_BRIDGED_TOKENS)
        if self.heads is None:
            object.__setattr__(self, 'heads', settings.SCI_HEADS)
        if min(self.channels, self.frames, self.height, self.width, self.h_win, self.w_win, self.heads) < 1:
            raise ConfigError(f"attention extents must all be positive: {self}")
        if self.channels % self.heads:
            raise ConfigError(f"heads ({self.heads}) must divide channels ({self.channels})")
        if self.n_bridged is not None and not 1 <= self.n_bridged <= self.window_tokens:
            raise ConfigError(
                f"n_bridged must lie in [1, {self.window_tokens}] for a {self.h_win}x{self.w_win} window, "
                f"got {self.n_bridged}"
            )

    @property
    def window_tokens(self) -> int:
        return self.h_win * self.w_win

    @property
    def head_dim(self) -> int:
        return self.channels // self.heads

    @property
    def reduces(self) -> bool:
        """Bridged tokens are cheaper than plain window attention iff 2 N_B < h_win * w_win"""
        return self.n_bridged is not None and 2 * self.n_bridged < self.window_tokens

    def padded_extent(self) -> Tuple[int, int]:
        return (
            math.ceil(self.height / self.h_win) * self.h_win,
            math.ceil(self.width / self.w_win) * self.w_win,
        )

    def at_scale(self, channels: int, frames: int, height: int, width: int) -> "AttentionConfig":
        """Same window, token and head settings on another feature map"""
        return AttentionConfig(channels, frames, height, width, self.h_win, self.w_win, self.n_bridged, self.heads)


class MacCounter:
    """Thread-safe tally of multiply-accumulates per accounting term"""

    def __init__(self):
        self._lock = threading.Lock()
        self._tallies = Counter()

    def add(self, term: str, macs: int) -> None:
        with self._lock:
            self._tallies[term] += int(macs)

    def merge(self, other: "MacCounter") -> None:
        with other._lock:
            tallies = dict(other._tallies)
        with self._lock:
            self._tallies.update(tallies)

    def __getitem__(self, term: str) -> int:
        with self._lock:
            return self._tallies[term]

    @property
    def total(self) -> int:
        with self._lock:
            return sum(self._tallies.values())


def _is_meta(tensor: torch.Tensor) -> bool:
    return tensor.device.type == 'meta'


def _check_finite(*tensors: torch.Tensor) -> None:
    for tensor in tensors:
        if not _is_meta(tensor) and not torch.isfinite(tensor).all():
            raise NumericalError("attention inputs contain non-finite values")


def _check_temperature(tau) -> None:
    if isinstance(tau, torch.Tensor):
        if _is_meta(tau):
            return
        tau = float(tau)
    if not tau > 0:
        raise ConfigError(f"attention temperature must be positive, got {tau}")


def _reflect_index(size: int, target: int, device) -> torch.Tensor:
    index = torch.arange(target, device=device)
    if size == 1:
        return torch.zeros_like(index)
    period = 2 * (size - 1)
    index = index % period
    return torch.where(index < size, index, period - index)


def pad_to_window(x: torch.Tensor, h_win: int, w_win: int) -> torch.Tensor:
    """Reflect-pad the bottom and right edges of T x H x W x C up to window multiples"""
    _, height, width, _ = x.shape
    padded_h = math.ceil(height / h_win) * h_win
    padded_w = math.ceil(width / w_win) * w_win
    if padded_h != height:
        x = x.index_select(1, _reflect_index(height, padded_h, x.device))
    if padded_w != width:
        x = x.index_select(2, _reflect_index(width, padded_w, x.device))
    return x


def window_partition(x: torch.Tensor, h_win: int, w_win: int) -> torch.Tensor:
    """T x H x W x C -> (T*h*w) x (h_win*w_win) x C, windows in (t, row, col) order"""
    _, height, width, _ = x.shape
    if height % h_win or width % w_win:
        raise ConfigError(f"{height}x{width} is not a multiple of the {h_win}x{w_win} window; pad first")
    return rearrange(x, 't (h p) (w q) c -> (t h w) (p q) c', p=h_win, q=w_win)


def window_reverse(windows: torch.Tensor, frames: int, height: int, width: int, h_win: int, w_win: int) -> torch.Tensor:
    if height % h_win or width % w_win:
        raise ConfigError(f"{height}x{width} is not a multiple of the {h_win}x{w_win} window")
    return rearrange(
        windows,
        '(t h w) (p q) c -> t (h p) (w q) c',
        t=frames, h=height // h_win, w=width // w_win, p=h_win, q=w_win,
    )


def bridged_grid(h_win: int, w_win: int, n_bridged: int) -> Tuple[int, int]:
    """
    r x s pooling grid with r | h_win, s | w_win and r * s = n_bridged

    Among feasible pairs the one whose aspect ratio is closest to the window's
    wins; ties go to the larger r.
    """
    target = math.log(h_win / w_win)
    best = None
    for rows in range(h_win, 0, -1):
        if h_win % rows or n_bridged % rows:
            continue
        cols = n_bridged // rows
        if w_win % cols:
            continue
        gap = abs(math.log(rows / cols) - target)
        if best is None or gap < best[0] - 1e-12:
            best = (gap, rows, cols)
    if best is None:
        raise ConfigError(
            f"{n_bridged} bridged tokens cannot be pooled from a {h_win}x{w_win} window on a regular grid"
        )
    return best[1], best[2]


def pool_bridged_tokens(q_windows: torch.Tensor, h_win: int, w_win: int, n_bridged: int) -> torch.Tensor:
    """Average-pool each window's query grid down to N_B bridged tokens"""
    rows, cols = bridged_grid(h_win, w_win, n_bridged)
    grid = rearrange(q_windows, 'b (p q) c -> b c p q', p=h_win, q=w_win)
    pooled = F.avg_pool2d(grid, kernel_size=(h_win // rows, w_win // cols))
    return rearrange(pooled, 'b c r s -> b (r s) c')


def scaled_attention_weights(q: torch.Tensor, k: torch.Tensor, tau) -> torch.Tensor:
    """Row-softmax of Q K^T / tau"""
    _check_temperature(tau)
    return torch.softmax(q @ k.transpose(-2, -1) / tau, dim=-1)


def scaled_attention(q, k, v, tau, counter: Optional[MacCounter] = None, term: str = BRIDGED_ATTENTION):
    """
    Softmax(Q K^T / tau) V over the last two axes; leading axes are batch axes

    Counts n*m*d MACs for Q K^T and n*m*e for the product with V.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"incompatible attention operands {tuple(q.shape)}, {tuple(k.shape)}, {tuple(v.shape)}")
    _check_finite(q, k, v)
    output = scaled_attention_weights(q, k, tau) @ v
    if counter is not None:
        batch = math.prod(q.shape[:-2])
        queries, depth = q.shape[-2:]
        keys, value_depth = v.shape[-2:]
        counter.add(term, batch * queries * keys * (depth + value_depth))
    return output


def _split_heads(tokens: torch.Tensor, heads: int) -> torch.Tensor:
    return rearrange(tokens, 'b n (g d) -> b g n d', g=heads)


def depthwise_conv3x3(x: torch.Tensor, weight: torch.Tensor) -> torch.Tensor:
    """Per-channel 3x3 spatial convolution with zero padding, T x H x W x C in and out"""
    planes = rearrange(x, 't h w c -> t c h w')
    filtered = F.conv2d(planes, weight, padding=1, groups=planes.shape[1])
    return rearrange(filtered, 't c h w -> t h w c')


def bridged_spatial_attention(q_s, k_s, v_s, residual, gconv, tau1, tau2, config: AttentionConfig,
                              counter: Optional[MacCounter] = None):
    """
    GConv(A(Q_s, B_s, A(B_s, K_s, V_s, tau1), tau2)) + residual

    B_s are the bridged tokens pooled from Q_s. All inputs are T x H x W x C;
    the map is reflect-padded to window multiples and cropped back afterwards.
    """
    if not q_s.shape == k_s.shape == v_s.shape == residual.shape:
        raise ShapeError("spatial attention operands must share one T x H x W x C shape")
    frames, height, width, _ = q_s.shape
    h_win, w_win = config.h_win, config.w_win
    q_w, k_w, v_w = (window_partition(pad_to_window(t, h_win, w_win), h_win, w_win) for t in (q_s, k_s, v_s))
    padded_h = math.ceil(height / h_win) * h_win
    padded_w = math.ceil(width / w_win) * w_win

    heads = config.heads
    if config.n_bridged is None:
        out = scaled_attention(_split_heads(q_w, heads), _split_heads(k_w, heads), _split_heads(v_w, heads),
                               tau1, counter, BRIDGED_ATTENTION)
    else:
        bridged = _split_heads(pool_bridged_tokens(q_w, h_win, w_win, config.n_bridged), heads)
        summary = scaled_attention(bridged, _split_heads(k_w, heads), _split_heads(v_w, heads),
                                   tau1, counter, BRIDGED_ATTENTION)
        out = scaled_attention(_split_heads(q_w, heads), bridged, summary, tau2, counter, BRIDGED_ATTENTION)
    out = rearrange(out, 'b g n d -> b n (g d)')
    out = window_reverse(out, frames, padded_h, padded_w, h_win, w_win)[:, :height, :width, :]
    return depthwise_conv3x3(out, gconv) + residual


def temporal_attention(q_t, k_t, value, tau3, heads: int = 1, counter: Optional[MacCounter] = None):
    """Per-pixel attention across all T frames; no temporal window"""
    if not q_t.shape == k_t.shape == value.shape:
        raise ShapeError("temporal attention operands must share one T x H x W x C shape")
    height = q_t.shape[1]
    q, k, v = (rearrange(t, 't h w (g d) -> (h w) g t d', g=heads) for t in (q_t, k_t, value))
    out = scaled_attention(q, k, v, tau3, counter, TEMPORAL_ATTENTION)
    return rearrange(out, '(h w) g t d -> t h w (g d)', h=height)


def channel_map(x: torch.Tensor, weight: torch.Tensor, counter: Optional[MacCounter] = None) -> torch.Tensor:
    """Per-token C_in -> C_out linear map; counted as a projection"""
    if counter is not None:
        counter.add(PROJECTION, math.prod(x.shape[:-1]) * weight.shape[0] * weight.shape[1])
    return F.linear(x, weight)


class CDPAWeights(nn.Module):
    """
    Parameters of one CDPA layer

    Q/K/V projections and the output map W_o are C x C; `temperatures` holds
    tau1 (bridged summary), tau2 (redistribution) and tau3 (temporal).
    """

    def __init__(self, channels: int, heads: int = 1, device=None, dtype=torch.float64):
        super().__init__()
        factory = {'device': device, 'dtype': dtype}
        self.channels = channels
        self.heads = heads
        self.norm = nn.LayerNorm(channels, **factory)
        self.w_q = nn.Parameter(torch.empty(channels, channels, **factory))
        self.w_k = nn.Parameter(torch.empty(channels, channels, **factory))
        self.w_v = nn.Parameter(torch.empty(channels, channels, **factory))
        self.w_o = nn.Parameter(torch.empty(channels, channels, **factory))
        self.gconv = nn.Parameter(torch.empty(channels, 1, 3, 3, **factory))
        self.temperatures = nn.Parameter(torch.empty(3, **factory))

    def reset_parameters(self, generator: torch.Generator) -> None:
        bound = 1.0 / math.sqrt(self.channels)
        with torch.no_grad():
            for weight in (self.w_q, self.w_k, self.w_v, self.w_o, self.gconv):
                weight.uniform_(-bound, bound, generator=generator)
            self.temperatures.fill_(math.sqrt(self.channels // self.heads))
            self.norm.reset_parameters()

    def forward(self, x, config: AttentionConfig, ordering=Ordering.ST_PROPAGATED, counter=None):
        return cdpa(x, self, config, ordering, counter)


@torch.no_grad()
def cdpa(x: torch.Tensor, weights: CDPAWeights, config: AttentionConfig, ordering=Ordering.ST_PROPAGATED,
         counter: Optional[MacCounter] = None) -> torch.Tensor:
    """
    One cross-domain propagated attention layer

    LayerNorm, then Q, K and V projected once from the block input. With
    propagation the second domain takes the first domain's output as its
    value; without it that value is re-projected through W_v. Parallel sums the
    two domains run on the same V. Every ordering ends with W_o.
    """
    if x.ndim != 4 or x.shape[-1] != config.channels:
        raise ShapeError(f"CDPA input {tuple(x.shape)} does not match {config.channels} channels")
    ordering = Ordering(ordering)
    tau1, tau2, tau3 = weights.temperatures
    heads = config.heads

    u = F.layer_norm(x, (config.channels,), weights.norm.weight, weights.norm.bias)
    q = channel_map(u, weights.w_q, counter)
    k = channel_map(u, weights.w_k, counter)
    v = channel_map(u, weights.w_v, counter)

    def spatial(value):
        return bridged_spatial_attention(q, k, value, x, weights.gconv, tau1, tau2, config, counter)

    def temporal(value):
        return temporal_attention(q, k, value, tau3, heads, counter)

    def reproject(y):
        normed = F.layer_norm(y, (config.channels,), weights.norm.weight, weights.norm.bias)
        return channel_map(normed, weights.w_v, counter)

    if ordering is Ordering.ST_PROPAGATED:
        y = temporal(spatial(v))
    elif ordering is Ordering.ST:
        y = temporal(reproject(spatial(v)))
    elif ordering is Ordering.TS_PROPAGATED:
        y = spatial(temporal(v))
    elif ordering is Ordering.TS:
        y = spatial(reproject(temporal(v)))
    else:
        y = spatial(v) + temporal(v)
    return channel_map(y, weights.w_o, counter)
