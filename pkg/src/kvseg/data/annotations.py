"""Ground-truth containers shared by the generator, trainer and metrics.

A panoptic frame is two aligned integer maps: per-pixel semantic class id and
per-pixel instance id (0 where no instance, i.e. on stuff). Instance ids are
persistent within a video: the same physical object keeps its id across frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError

IGNORE_ID = 65535


@dataclass(frozen=True)
class ClassTable:
    """Which semantic ids are countable things vs amorphous stuff."""

    thing_classes: tuple[int, ...]
    stuff_classes: tuple[int, ...]
    ignore_id: int = IGNORE_ID

    def __post_init__(self):
        overlap = set(self.thing_classes) & set(self.stuff_classes)
        if overlap:
            raise DataError(f"classes listed as both thing and stuff: {sorted(overlap)}")
        if self.ignore_id in self.thing_classes or self.ignore_id in self.stuff_classes:
            raise DataError("ignore_id collides with a real class id")

    @property
    def num_things(self) -> int:
        return len(self.thing_classes)

    @property
    def num_stuffs(self) -> int:
        return len(self.stuff_classes)

    def thing_index(self, class_id: int) -> int:
        return self.thing_classes.index(class_id)

    def all_classes(self) -> tuple[int, ...]:
        return tuple(self.thing_classes) + tuple(self.stuff_classes)

    def to_json(self) -> dict:
        return {
            "things": list(self.thing_classes),
            "stuffs": list(self.stuff_classes),
            "ignore_id": self.ignore_id,
        }

    @staticmethod
    def from_json(obj: dict) -> "ClassTable":
        try:
            return ClassTable(
                thing_classes=tuple(int(c) for c in obj["things"]),
                stuff_classes=tuple(int(c) for c in obj["stuffs"]),
                ignore_id=int(obj.get("ignore_id", IGNORE_ID)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed class table: {exc}") from exc


@dataclass
class PanopticFrame:
    semantic: np.ndarray  # [H, W] integer class ids
    instance: np.ndarray  # [H, W] integer instance ids, 0 = none

    def __post_init__(self):
        self.semantic = np.asarray(self.semantic)
        self.instance = np.asarray(self.instance)
        if self.semantic.shape != self.instance.shape or self.semantic.ndim != 2:
            raise DataError(
                f"semantic/instance shape mismatch: {self.semantic.shape} vs {self.instance.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.semantic.shape

    def validate(self, classes: ClassTable) -> None:
        sem, inst = self.semantic, self.instance
        known = set(classes.all_classes()) | {classes.ignore_id}
        present = set(np.unique(sem).tolist())
        unknown = present - known
        if unknown:
            raise DataError(f"unknown semantic ids {sorted(unknown)}")
        thing_mask = np.isin(sem, list(classes.thing_classes))
        if np.any((inst > 0) & ~thing_mask):
            raise DataError("instance id set on a non-thing pixel")
        if np.any((inst == 0) & thing_mask):
            raise DataError("thing pixel without an instance id")
        # one semantic class per instance id
        for iid in np.unique(inst[inst > 0]):
            sems = np.unique(sem[inst == iid])
            if len(sems) != 1:
                raise DataError(f"instance {iid} spans semantic classes {sems.tolist()}")


@dataclass
class VideoAnnotation:
    frames: list[PanopticFrame]
    classes: ClassTable
    video_id: int = 0

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames[0].shape

    def validate(self) -> None:
        if not self.frames:
            raise DataError("video with no frames")
        shape = self.frames[0].shape
        id_class: dict[int, int] = {}
        for t, fr in enumerate(self.frames):
            if fr.shape != shape:
                raise DataError(f"frame {t} shape {fr.shape} != {shape}")
            fr.validate(self.classes)
            for iid in np.unique(fr.instance[fr.instance > 0]):
                cls = int(fr.semantic[fr.instance == iid][0])
                if id_class.setdefault(int(iid), cls) != cls:
                    raise DataError(f"instance {iid} changes class across frames")

    def track_ids(self) -> list[int]:
        ids: set[int] = set()
        for fr in self.frames:
            ids.update(int(i) for i in np.unique(fr.instance) if i > 0)
        return sorted(ids)


@dataclass
class VideoRecord:
    """A loaded video: raw frames plus ground truth."""

    frames_rgb: np.ndarray  # [T, H, W, 3] uint8
    annotation: VideoAnnotation
    name: str = ""


@dataclass
class Dataset:
    videos: list[VideoRecord]
    classes: ClassTable
    root: str = ""

    def __len__(self) -> int:
        return len(self.videos)
