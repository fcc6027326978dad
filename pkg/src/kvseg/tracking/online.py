"""Frame-ordered tracking around a frozen model, plus the clip-mode decoder.

The online path never looks ahead: each frame is segmented (with kernel
fusion against the cached previous-frame memory when enabled), stitched,
linked against the previous frame's surviving kernels, embedded, and greedily
associated against the id ledger. State carried between frames: the fusion
memory, the previous final thing kernels with their surviving-row mask, and
the track store itself.

Clip mode instead decodes a whole clip jointly and needs no ledger: the
kernel index is the identity, so the same physical slot keeps one id across
every frame it survives in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import ClassTable, PanopticFrame
from ..errors import ConfigError
from ..model import StageOutput, VideoSegmenter
from .association import (
    EMA_MOMENTUM,
    MATCH_THRESH,
    TTL,
    TrackStore,
    associate,
    bi_softmax_scores,
)
from .stitch import OVERLAP_KEEP_THRESH, SCORE_THRESH, StitchResult, panoptic_stitch


@dataclass(frozen=True)
class TrackParams:
    score_thresh: float = SCORE_THRESH
    overlap_keep_thresh: float = OVERLAP_KEEP_THRESH
    match_thresh: float = MATCH_THRESH
    ema_momentum: float = EMA_MOMENTUM
    ttl: int = TTL
    mask_upsample: str = "nearest"

    def to_dict(self) -> dict:
        return {
            "score_thresh": self.score_thresh,
            "overlap_keep_thresh": self.overlap_keep_thresh,
            "match_thresh": self.match_thresh,
            "ema_momentum": self.ema_momentum,
            "ttl": self.ttl,
            "mask_upsample": self.mask_upsample,
        }


@dataclass
class TrackedFrame:
    index: int
    panoptic: PanopticFrame  # instance plane holds persistent track ids
    records: list[dict]  # one JSONL row per visible instance
    preserved: np.ndarray  # surviving thing kernel indices
    assignment: dict[int, int]  # kernel index -> track id
    stitch: StitchResult


def _log_rows(index: int, frame: PanopticFrame, assignment: dict[int, int], stitch: StitchResult) -> list[dict]:
    rows = []
    for k in sorted(assignment):
        tid = assignment[k]
        rows.append(
            {
                "frame": index,
                "track_id": int(tid),
                "class_id": stitch.kernel_class(k),
                "score": float(stitch.scores[k]),
                "mask_area": int((frame.instance == tid).sum()),
            }
        )
    return rows


class OnlineTracker:
    """Causal per-frame stepper. One instance tracks one video."""

    def __init__(
        self,
        model: VideoSegmenter | None,
        classes: ClassTable,
        params: TrackParams = TrackParams(),
        store: TrackStore | None = None,
    ):
        self.model = model  # None is fine when driving step_stitched directly
        self.classes = classes
        self.params = params
        self.store = store if store is not None else TrackStore()
        self._frame = 0
        self._memory = None  # KernelSet entering the fusion stage last frame
        self._prev_things = None  # Tensor [N_thing, C], final kernels last frame
        self._prev_preserved = None  # bool [N_thing]

    def step(self, image: np.ndarray) -> TrackedFrame:
        if self.model is None:
            raise ConfigError("this tracker was built without a model")
        out = self.model.forward_frame(image, memory=self._memory)
        h, w = image.shape[:2]
        stitch = panoptic_stitch(
            out.final,
            self.classes,
            out_hw=(h, w),
            score_thresh=self.params.score_thresh,
            overlap_keep_thresh=self.params.overlap_keep_thresh,
            mask_upsample=self.params.mask_upsample,
        )

        things = out.final.kernels.kernels[out.final.kernels.thing_slice]
        n_thing = things.shape[0]
        cur_rows = np.zeros(n_thing, dtype=bool)
        cur_rows[stitch.preserved] = True

        emb_source = things
        if (
            self.model.linker is not None
            and self._prev_things is not None
            and cur_rows.any()
            and self._prev_preserved.any()
        ):
            linked = self.model.link_things(
                things, self._prev_things, cur_rows=cur_rows, ref_rows=self._prev_preserved
            )
            if not self.model.cfg.embed_prelink:
                emb_source = linked
        features = self.model.embed_things(emb_source) if self.model.embed_head is not None else emb_source
        feats = features.numpy().astype(np.float64)[stitch.preserved]

        tracked = self.step_stitched(stitch, feats)
        self._memory = out.fuse_memory
        self._prev_things = things
        self._prev_preserved = cur_rows
        return tracked

    def step_stitched(self, stitch: StitchResult, feats: np.ndarray) -> TrackedFrame:
        """Model-free entry: stitched frame + one feature row per preserved
        kernel -> persistent ids. ``step`` routes through here; fixture tests
        drive it directly."""
        preserved = stitch.preserved
        class_ids = stitch.thing_classes[preserved] if preserved.size else np.zeros(0, np.int64)
        cand = self.store.candidates(self._frame, self.params.ttl)
        if preserved.size and cand:
            scores = bi_softmax_scores(feats, np.stack([t.embedding for t in cand]))
        else:
            scores = np.zeros((preserved.size, len(cand)))
        row_assignment = associate(
            scores,
            feats,
            class_ids,
            cand,
            self.store,
            self._frame,
            match_thresh=self.params.match_thresh,
            momentum=self.params.ema_momentum,
            ttl=self.params.ttl,
        )
        assignment = {int(preserved[i]): tid for i, tid in row_assignment.items()}

        instance = np.zeros_like(stitch.frame.instance)
        for k, tid in assignment.items():
            instance[stitch.frame.instance == k + 1] = tid
        frame = PanopticFrame(semantic=stitch.frame.semantic.copy(), instance=instance)

        tracked = TrackedFrame(
            index=self._frame,
            panoptic=frame,
            records=_log_rows(self._frame, frame, assignment, stitch),
            preserved=preserved,
            assignment=assignment,
            stitch=stitch,
        )
        self._frame += 1
        return tracked


def step_video(
    model: VideoSegmenter,
    images: np.ndarray,
    classes: ClassTable,
    params: TrackParams = TrackParams(),
    store: TrackStore | None = None,
) -> list[TrackedFrame]:
    """Track one video ([T, H, W, 3] uint8 or an iterable of frames)."""
    tracker = OnlineTracker(model, classes, params=params, store=store)
    return [tracker.step(img) for img in images]


def decode_clip(
    model: VideoSegmenter,
    images: np.ndarray,
    classes: ClassTable,
    params: TrackParams = TrackParams(),
) -> list[TrackedFrame]:
    """Joint clip decoding: instance id = kernel index + 1, same in all frames.

    Classification comes from the temporal-mean clip kernel, so a slot keeps
    one class for the whole clip; per-frame masks come from that frame's
    refined kernels.
    """
    if model.clip_fusion is None:
        raise ConfigError("model built without clip fusion; use step_video")
    frames = list(images)
    clip = model.forward_clip(frames)
    out: list[TrackedFrame] = []
    for t, logits in enumerate(clip.frame_mask_logits):
        stage = StageOutput(kernels=clip.clip_kernels, mask_logits=logits, class_logits=clip.class_logits)
        h, w = frames[t].shape[:2]
        stitch = panoptic_stitch(
            stage,
            classes,
            out_hw=(h, w),
            score_thresh=params.score_thresh,
            overlap_keep_thresh=params.overlap_keep_thresh,
            mask_upsample=params.mask_upsample,
        )
        assignment = {int(k): int(k) + 1 for k in stitch.preserved}
        out.append(
            TrackedFrame(
                index=t,
                panoptic=stitch.frame,
                records=_log_rows(t, stitch.frame, assignment, stitch),
                preserved=stitch.preserved,
                assignment=assignment,
                stitch=stitch,
            )
        )
    return out
