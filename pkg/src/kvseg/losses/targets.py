"""Ground-truth targets at feature resolution.

Masks are downsampled by block majority vote (a cell is foreground when at
least half of its source pixels are), which keeps targets binary and
deterministic. Pixels labeled with the ignore id count as background here;
the evaluation metrics, not the training targets, own the ignore semantics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import ClassTable, PanopticFrame
from ..errors import ConfigError


def downsample_mask(mask: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    h, w = mask.shape
    oh, ow = out_hw
    if h % oh or w % ow:
        raise ConfigError(f"mask {h}x{w} not divisible by target grid {oh}x{ow}")
    blocks = mask.astype(np.float64).reshape(oh, h // oh, ow, w // ow)
    return blocks.mean(axis=(1, 3)) >= 0.5


@dataclass
class FrameTargets:
    """Per-frame supervision: one row per GT thing, one per stuff class."""

    thing_masks: np.ndarray  # [G, h, w] float64 in {0, 1}
    thing_classes: np.ndarray  # [G] semantic class ids
    thing_track_ids: np.ndarray  # [G] persistent instance ids
    stuff_masks: np.ndarray  # [S, h, w] float64, declared stuff order
    shape: tuple[int, int] = field(default=(0, 0))

    @property
    def num_things(self) -> int:
        return len(self.thing_classes)


def build_frame_targets(frame: PanopticFrame, classes: ClassTable, out_hw: tuple[int, int]) -> FrameTargets:
    thing_masks = []
    thing_classes = []
    track_ids = []
    for iid in np.unique(frame.instance):
        if iid <= 0:
            continue
        full = frame.instance == iid
        cls = int(frame.semantic[full][0])
        thing_masks.append(downsample_mask(full, out_hw).astype(np.float64))
        thing_classes.append(cls)
        track_ids.append(int(iid))
    stuff_masks = [
        downsample_mask(frame.semantic == cls, out_hw).astype(np.float64) for cls in classes.stuff_classes
    ]
    g = len(thing_masks)
    return FrameTargets(
        thing_masks=np.stack(thing_masks) if g else np.zeros((0, *out_hw), dtype=np.float64),
        thing_classes=np.array(thing_classes, dtype=np.int64),
        thing_track_ids=np.array(track_ids, dtype=np.int64),
        stuff_masks=np.stack(stuff_masks) if stuff_masks else np.zeros((0, *out_hw), dtype=np.float64),
        shape=out_hw,
    )
