"""Hot numeric kernels with numba and pure-numpy twins.

Every function here exists twice: an ``_nb`` variant compiled with numba's
``@njit`` and an ``_np`` variant written in plain vectorized numpy. Which one
backs the public name is decided once at import time:

* if numba is importable and ``KVSEG_DISABLE_NUMBA`` is unset/falsy, the numba
  variants are used;
* otherwise the numpy fallbacks are used. Results agree (integer kernels
  exactly, float kernels to summation-order noise).

``benchmarks/bench_accel.py`` times both paths side by side.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag instead
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


def _flag_disabled() -> bool:
    return os.environ.get("KVSEG_DISABLE_NUMBA", "").strip().lower() in (
        "1",
        "true",
        "yes",
        "on",
    )


NUMBA_ENABLED = _HAVE_NUMBA and not _flag_disabled()


# ---------------------------------------------------------------------------
# im2col / col2im for 3x3-style convolutions on [C, H, W] maps (no batch dim).
# im2col returns [C*kh*kw, Ho*Wo]; col2im is its adjoint (scatter-add).
# ---------------------------------------------------------------------------


def _im2col_np(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    c, h, w = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    xp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    xp[:, pad : pad + h, pad : pad + w] = x
    cols = np.empty((c, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(c * kh * kw, ho * wo)


@njit(cache=True)
def _im2col_nb(x, kh, kw, stride, pad):  # pragma: no cover - numba path
    c, h, w = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((c * kh * kw, ho * wo), dtype=x.dtype)
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                row = (ci * kh + i) * kw + j
                for oy in range(ho):
                    iy = oy * stride + i - pad
                    if iy < 0 or iy >= h:
                        continue
                    for ox in range(wo):
                        ix = ox * stride + j - pad
                        if 0 <= ix < w:
                            out[row, oy * wo + ox] = x[ci, iy, ix]
    return out


def _col2im_np(
    cols: np.ndarray, c: int, h: int, w: int, kh: int, kw: int, stride: int, pad: int
) -> np.ndarray:
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    grid = cols.reshape(c, kh, kw, ho, wo)
    xp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, i : i + stride * ho : stride, j : j + stride * wo : stride] += grid[:, i, j]
    return xp[:, pad : pad + h, pad : pad + w]


@njit(cache=True)
def _col2im_nb(cols, c, h, w, kh, kw, stride, pad):  # pragma: no cover - numba path
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((c, h, w), dtype=cols.dtype)
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                row = (ci * kh + i) * kw + j
                for oy in range(ho):
                    iy = oy * stride + i - pad
                    if iy < 0 or iy >= h:
                        continue
                    for ox in range(wo):
                        ix = ox * stride + j - pad
                        if 0 <= ix < w:
                            out[ci, iy, ix] += cols[row, oy * wo + ox]
    return out


# ---------------------------------------------------------------------------
# Sequential mask painting for panoptic stitching. Masks arrive already sorted
# by descending confidence; each claims the still-free pixels it covers. Thing
# masks are dropped when their surviving fraction falls below min_keep_frac.
# Returns (canvas of mask indices, -1 where free; kept flags).
# ---------------------------------------------------------------------------


def _paint_masks_np(masks: np.ndarray, is_thing: np.ndarray, min_keep_frac: float):
    n, h, w = masks.shape
    canvas = np.full((h, w), -1, dtype=np.int32)
    kept = np.zeros(n, dtype=np.bool_)
    free = np.ones((h, w), dtype=np.bool_)
    for k in range(n):
        m = masks[k].astype(np.bool_)
        area = int(m.sum())
        if area == 0:
            continue
        claim = m & free
        survived = int(claim.sum())
        if is_thing[k] and survived < min_keep_frac * area:
            continue
        if survived == 0:
            continue
        canvas[claim] = k
        free &= ~claim
        kept[k] = True
    return canvas, kept


@njit(cache=True)
def _paint_masks_nb(masks, is_thing, min_keep_frac):  # pragma: no cover - numba path
    n, h, w = masks.shape
    canvas = np.full((h, w), -1, dtype=np.int32)
    kept = np.zeros(n, dtype=np.bool_)
    for k in range(n):
        area = 0
        survived = 0
        for y in range(h):
            for x in range(w):
                if masks[k, y, x]:
                    area += 1
                    if canvas[y, x] < 0:
                        survived += 1
        if area == 0:
            continue
        if is_thing[k] and survived < min_keep_frac * area:
            continue
        if survived == 0:
            continue
        for y in range(h):
            for x in range(w):
                if masks[k, y, x] and canvas[y, x] < 0:
                    canvas[y, x] = k
        kept[k] = True
    return canvas, kept


# ---------------------------------------------------------------------------
# Overlap counting between two integer id maps: returns (codes, counts) with
# code = a * offset + b, sorted ascending. Shared by the PQ/STQ/VPQ metrics.
# ---------------------------------------------------------------------------


def _pair_counts_np(a: np.ndarray, b: np.ndarray, offset: int):
    codes = a.astype(np.int64).ravel() * np.int64(offset) + b.astype(np.int64).ravel()
    uniq, counts = np.unique(codes, return_counts=True)
    return uniq.astype(np.int64), counts.astype(np.int64)


@njit(cache=True)
def _pair_counts_nb(a, b, offset):  # pragma: no cover - numba path
    n = a.size
    codes = np.empty(n, dtype=np.int64)
    fa = a.ravel()
    fb = b.ravel()
    for i in range(n):
        codes[i] = np.int64(fa[i]) * offset + np.int64(fb[i])
    codes = np.sort(codes)
    uniq = np.empty(n, dtype=np.int64)
    counts = np.empty(n, dtype=np.int64)
    m = 0
    i = 0
    while i < n:
        j = i
        while j < n and codes[j] == codes[i]:
            j += 1
        uniq[m] = codes[i]
        counts[m] = j - i
        m += 1
        i = j
    return uniq[:m].copy(), counts[:m].copy()


if NUMBA_ENABLED:
    im2col = _im2col_nb
    col2im = _col2im_nb
    paint_masks = _paint_masks_nb
    pair_counts = _pair_counts_nb
else:
    im2col = _im2col_np
    col2im = _col2im_np
    paint_masks = _paint_masks_np
    pair_counts = _pair_counts_np


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
