"""Deterministic synthetic video scenes: textured shapes over stuff layouts.

All geometry is integer: centers are rounded with floor(c + 0.5) before
rasterizing, and membership predicates use integer arithmetic only. Combined
with explicit little-endian serialization this makes a generated dataset
byte-identical across platforms for the same seed.

Semantic ids: stuff 0..2 (three fixed layout materials), things 3 (box),
4 (disc), 5 (wedge). Later objects in spec order occlude earlier ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .annotations import ClassTable, PanopticFrame, VideoAnnotation

STUFF_CLASSES = (0, 1, 2)
THING_CLASSES = (3, 4, 5)  # box, disc, wedge

CLASS_TABLE = ClassTable(thing_classes=THING_CLASSES, stuff_classes=STUFF_CLASSES)

_STUFF_BASE = {0: (52, 86, 125), 1: (92, 118, 62), 2: (128, 88, 120)}
_THING_BASE = {3: (215, 170, 60), 4: (200, 70, 70), 5: (90, 190, 200)}

LAYOUTS = ("horizon", "stripes", "rings")


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to regenerate one video."""

    seed: int
    height: int = 64
    width: int = 64
    num_frames: int = 4
    num_things: int = 2
    stuff_layout: str = "horizon"
    min_half: int = 9  # shape half-extent range, pixels
    max_half: int = 14
    min_speed: float = 1.0  # per-frame displacement range, pixels
    max_speed: float = 3.0
    color_jitter: int = 28  # per-instance channel offset bound
    occluders: bool = False  # drop one object behind another mid-video
    thing_classes: tuple[int, ...] | None = None  # restrict spawned shape classes

    def __post_init__(self):
        if self.stuff_layout not in LAYOUTS:
            raise ConfigError(f"unknown stuff layout {self.stuff_layout!r}, expected one of {LAYOUTS}")
        if self.num_things < 0 or self.num_frames < 1:
            raise ConfigError("num_things must be >= 0 and num_frames >= 1")
        if not (0 < self.min_half <= self.max_half):
            raise ConfigError("bad shape size range")
        if self.thing_classes is not None and not set(self.thing_classes) <= set(THING_CLASSES):
            raise ConfigError(f"thing_classes must be drawn from {THING_CLASSES}")


def _iround(c: float) -> int:
    return int(np.floor(c + 0.5))


def _stuff_maps(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    h, w = spec.height, spec.width
    yy, xx = np.mgrid[0:h, 0:w]
    if spec.stuff_layout == "horizon":
        split = int(rng.integers(int(h * 0.35), int(h * 0.65) + 1))
        sem = np.where(yy < split, 0, 1)
    elif spec.stuff_layout == "stripes":
        band = int(rng.integers(max(4, w // 8), max(5, w // 4) + 1))
        sem = (xx // band) % 3
    else:  # rings
        cy = int(rng.integers(h // 3, 2 * h // 3 + 1))
        cx = int(rng.integers(w // 3, 2 * w // 3 + 1))
        ring = int(rng.integers(max(4, min(h, w) // 8), max(5, min(h, w) // 5) + 1))
        sem = (np.maximum(np.abs(yy - cy), np.abs(xx - cx)) // ring) % 3
    return sem.astype(np.int32)


def _shape_mask(cls: int, cy: int, cx: int, ry: int, rx: int, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    dy = yy - cy
    dx = xx - cx
    if cls == 3:  # box
        return (np.abs(dy) <= ry) & (np.abs(dx) <= rx)
    if cls == 4:  # disc
        return dx * dx * (ry * ry) + dy * dy * (rx * rx) <= (rx * rx) * (ry * ry)
    # wedge: apex up, integer half-width per row
    half = ((dy + ry) * rx) // (2 * ry)
    return (dy >= -ry) & (dy <= ry) & (np.abs(dx) <= half)


@dataclass
class _Obj:
    track_id: int
    cls: int
    cy: float
    cx: float
    ry: int
    rx: int
    vy: float
    vx: float
    jitter: np.ndarray  # int16 [3]
    hidden: tuple[int, int] | None = None  # frame range [a, b) where absent


def _spawn(spec: SceneSpec, rng: np.random.Generator) -> list[_Obj]:
    objs = []
    pool = THING_CLASSES if spec.thing_classes is None else tuple(spec.thing_classes)
    for i in range(spec.num_things):
        cls = int(rng.choice(pool))
        ry = int(rng.integers(spec.min_half, spec.max_half + 1))
        rx = int(rng.integers(spec.min_half, spec.max_half + 1))
        cy = float(rng.uniform(ry + 1, spec.height - ry - 2))
        cx = float(rng.uniform(rx + 1, spec.width - rx - 2))
        speed = float(rng.uniform(spec.min_speed, spec.max_speed))
        ang = float(rng.uniform(0, 2 * np.pi))
        jit = rng.integers(-spec.color_jitter, spec.color_jitter + 1, size=3).astype(np.int16)
        hidden = None
        if spec.occluders and i == spec.num_things - 1 and spec.num_frames >= 3:
            mid = spec.num_frames // 2
            hidden = (mid, mid + 1)
        objs.append(
            _Obj(
                track_id=i + 1,
                cls=cls,
                cy=cy,
                cx=cx,
                ry=ry,
                rx=rx,
                vy=speed * float(np.sin(ang)),
                vx=speed * float(np.cos(ang)),
                jitter=jit,
                hidden=hidden,
            )
        )
    return objs


def _advance(o: _Obj, h: int, w: int) -> None:
    o.cy += o.vy
    o.cx += o.vx
    if o.cy - o.ry < 0 or o.cy + o.ry > h - 1:
        o.vy = -o.vy
        o.cy = float(np.clip(o.cy, o.ry, h - 1 - o.ry))
    if o.cx - o.rx < 0 or o.cx + o.rx > w - 1:
        o.vx = -o.vx
        o.cx = float(np.clip(o.cx, o.rx, w - 1 - o.rx))


def _texture(rgb: np.ndarray, sem: np.ndarray) -> np.ndarray:
    h, w = sem.shape
    yy, xx = np.mgrid[0:h, 0:w]
    checker = (((yy >> 2) + (xx >> 2)) & 1).astype(np.int16) * 14
    fine = ((yy + xx) & 1).astype(np.int16) * 6
    out = rgb.astype(np.int16) + checker[..., None] + fine[..., None]
    return np.clip(out, 0, 255).astype(np.uint8)


def generate_video(spec: SceneSpec) -> tuple[np.ndarray, VideoAnnotation]:
    """Returns (frames_rgb [T, H, W, 3] uint8, annotation)."""
    rng = np.random.default_rng(np.random.PCG64(spec.seed))
    h, w = spec.height, spec.width
    stuff_sem = _stuff_maps(spec, rng)
    objs = _spawn(spec, rng)

    frames_rgb = np.zeros((spec.num_frames, h, w, 3), dtype=np.uint8)
    gt_frames: list[PanopticFrame] = []
    for t in range(spec.num_frames):
        sem = stuff_sem.copy()
        inst = np.zeros((h, w), dtype=np.int32)
        rgb = np.zeros((h, w, 3), dtype=np.uint8)
        for c in STUFF_CLASSES:
            rgb[stuff_sem == c] = _STUFF_BASE[c]
        for o in objs:  # later objects paint over earlier ones
            if o.hidden and o.hidden[0] <= t < o.hidden[1]:
                continue
            mask = _shape_mask(o.cls, _iround(o.cy), _iround(o.cx), o.ry, o.rx, h, w)
            sem[mask] = o.cls
            inst[mask] = o.track_id
            color = np.clip(np.array(_THING_BASE[o.cls], dtype=np.int16) + o.jitter, 0, 255)
            rgb[mask] = color.astype(np.uint8)
        frames_rgb[t] = _texture(rgb, sem)
        gt_frames.append(PanopticFrame(semantic=sem, instance=inst))
        for o in objs:
            _advance(o, h, w)

    ann = VideoAnnotation(frames=gt_frames, classes=CLASS_TABLE, video_id=spec.seed)
    ann.validate()
    return frames_rgb, ann


def generate_dataset(specs: list[SceneSpec]) -> list[tuple[np.ndarray, VideoAnnotation]]:
    return [generate_video(s) for s in specs]
