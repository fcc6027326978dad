"""Strided conv backbone and the pyramid neck with positional encoding.

Four conv blocks at cumulative strides 2, 4, 8, 8; the neck laterals the
stride-4 and stride-8 taps to a common width, upsamples the deep one, merges,
and emits one position-aware stride-4 map. Total stride is 8, so input sides
must be divisible by 8.
"""

from __future__ import annotations

import numpy as np

from ..engine import Conv2d, LayerNorm, Module, Tensor, upsample2_nearest
from ..errors import ConfigError
from .types import FeatureMap

TOTAL_STRIDE = 8
NECK_STRIDE = 4


def sinusoidal_positions(channels: int, h: int, w: int, dtype=np.float32) -> np.ndarray:
    """Fixed 2-D sinusoidal encoding, [C, H, W]; half the channels encode y,
    half x, sin/cos interleaved over geometrically spaced frequencies."""
    if channels % 4 != 0:
        raise ConfigError(f"positional encoding needs channels % 4 == 0, got {channels}")
    half = channels // 2
    freqs = np.arange(half // 2, dtype=np.float64)
    inv = 1.0 / (10000.0 ** (2.0 * freqs / half))
    ys = np.arange(h, dtype=np.float64)[:, None] * inv[None, :]  # [H, half/2]
    xs = np.arange(w, dtype=np.float64)[:, None] * inv[None, :]
    out = np.zeros((channels, h, w), dtype=np.float64)
    out[0:half:2] = np.sin(ys).T[:, :, None]
    out[1:half:2] = np.cos(ys).T[:, :, None]
    out[half::2] = np.sin(xs).T[:, None, :]
    out[half + 1 :: 2] = np.cos(xs).T[:, None, :]
    return out.astype(dtype)


class Backbone(Module):
    def __init__(self, widths: tuple[int, int, int, int], rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        w1, w2, w3, w4 = widths
        self.block1 = Conv2d(3, w1, 3, rng, stride=2, pad=1, dtype=dtype)
        self.block2 = Conv2d(w1, w2, 3, rng, stride=2, pad=1, dtype=dtype)
        self.block3 = Conv2d(w2, w3, 3, rng, stride=2, pad=1, dtype=dtype)
        self.block4 = Conv2d(w3, w4, 3, rng, stride=1, pad=1, dtype=dtype)

    def __call__(self, image: Tensor) -> tuple[Tensor, Tensor]:
        """Returns (stride-4 tap, stride-8 tap)."""
        c1 = self.block1(image).silu()
        c2 = self.block2(c1).silu()
        c3 = self.block3(c2).silu()
        c4 = self.block4(c3).silu()
        return c2, c4


class Neck(Module):
    """Two-level FPN emitting a single stride-4, position-aware feature map."""

    def __init__(self, widths: tuple[int, int, int, int], channels: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.lateral_hi = Conv2d(widths[1], channels, 1, rng, dtype=dtype)
        self.lateral_lo = Conv2d(widths[3], channels, 1, rng, dtype=dtype)
        self.out_conv = Conv2d(channels, channels, 3, rng, pad=1, dtype=dtype)
        self.norm = LayerNorm(channels, dtype=dtype)
        self.channels = channels
        self._pos_cache: dict[tuple[int, int], np.ndarray] = {}
        self._dtype = dtype

    def _positions(self, h: int, w: int) -> np.ndarray:
        key = (h, w)
        if key not in self._pos_cache:
            self._pos_cache[key] = sinusoidal_positions(self.channels, h, w, dtype=self._dtype)
        return self._pos_cache[key]

    def __call__(self, tap_hi: Tensor, tap_lo: Tensor) -> FeatureMap:
        merged = self.lateral_hi(tap_hi) + upsample2_nearest(self.lateral_lo(tap_lo))
        fused = self.out_conv(merged.silu())
        c, h, w = fused.shape
        # per-position LayerNorm over channels keeps the inner-product logits
        # at a trainable scale regardless of backbone drift
        flat = self.norm(fused.reshape(c, h * w).transpose(1, 0))
        out = flat.transpose(1, 0).reshape(c, h, w) + self._positions(h, w)
        return FeatureMap(values=out, stride=NECK_STRIDE, has_pos_enc=True)


class Encoder(Module):
    def __init__(self, widths: tuple[int, int, int, int], channels: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.backbone = Backbone(widths, rng, dtype=dtype)
        self.neck = Neck(widths, channels, rng, dtype=dtype)

    def __call__(self, image: Tensor) -> FeatureMap:
        _, h, w = image.shape
        if h % TOTAL_STRIDE or w % TOTAL_STRIDE:
            raise ConfigError(f"image sides must be divisible by {TOTAL_STRIDE}, got {h}x{w}")
        hi, lo = self.backbone(image)
        return self.neck(hi, lo)


def normalize_image(rgb: np.ndarray, dtype=np.float32) -> np.ndarray:
    """uint8 [H, W, 3] -> [3, H, W] in [-1, 1]."""
    x = rgb.astype(dtype) / 127.5 - 1.0
    return np.ascontiguousarray(x.transpose(2, 0, 1))
