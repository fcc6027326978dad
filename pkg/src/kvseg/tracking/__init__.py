from .association import (
    EMA_MOMENTUM,
    MATCH_THRESH,
    TTL,
    Track,
    TrackStore,
    associate,
    bi_softmax_parts,
    bi_softmax_scores,
)
from .online import OnlineTracker, TrackedFrame, TrackParams, decode_clip, step_video
from .stitch import (
    OVERLAP_KEEP_THRESH,
    SCORE_THRESH,
    StitchResult,
    panoptic_stitch,
    upsample_ids,
    upsample_logits,
)

__all__ = [
    "EMA_MOMENTUM",
    "MATCH_THRESH",
    "TTL",
    "Track",
    "TrackStore",
    "associate",
    "bi_softmax_parts",
    "bi_softmax_scores",
    "OnlineTracker",
    "TrackedFrame",
    "TrackParams",
    "decode_clip",
    "step_video",
    "OVERLAP_KEEP_THRESH",
    "SCORE_THRESH",
    "StitchResult",
    "panoptic_stitch",
    "upsample_ids",
    "upsample_logits",
]
