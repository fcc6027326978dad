"""Overlay rendering: one PNG per frame, one stable color per track id.

Track colors come from the golden-ratio walk around the hue circle keyed by
the id itself, so the same id always renders the same color in any frame of
any run. Stuff classes use fixed muted tones; void stays the raw image.
"""

from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np
from PIL import Image

from ..data import ClassTable, PanopticFrame

_GOLDEN = 0.6180339887498949
ALPHA = 0.55  # weight of the original pixels in the blend

_STUFF_TONES = [(90, 90, 110), (70, 105, 70), (110, 80, 95)]


def track_color(track_id: int) -> tuple[int, int, int]:
    hue = (track_id * _GOLDEN) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.85, 0.95)
    return int(r * 255), int(g * 255), int(b * 255)


def overlay_frame(rgb: np.ndarray, pan: PanopticFrame, classes: ClassTable) -> np.ndarray:
    paint = np.zeros_like(rgb, dtype=np.float64)
    painted = np.zeros(pan.shape, dtype=bool)
    for tid in np.unique(pan.instance):
        if tid <= 0:
            continue
        region = pan.instance == tid
        paint[region] = track_color(int(tid))
        painted |= region
    for i, cls in enumerate(classes.stuff_classes):
        region = (pan.semantic == cls) & ~painted
        paint[region] = _STUFF_TONES[i % len(_STUFF_TONES)]
        painted |= region
    out = rgb.astype(np.float64)
    out[painted] = ALPHA * out[painted] + (1.0 - ALPHA) * paint[painted]
    return np.clip(out + 0.5, 0, 255).astype(np.uint8)


def render_video(
    frames_rgb: np.ndarray,
    panoptics: list[PanopticFrame],
    classes: ClassTable,
    out_dir: str | Path,
    stem: str = "frame",
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for t, pan in enumerate(panoptics):
        img = overlay_frame(frames_rgb[t], pan, classes)
        path = out_dir / f"{stem}_{t:04d}.png"
        Image.fromarray(img).save(path)
        paths.append(path)
    return paths
