"""Assignment and training losses."""

from .bundle import LossBundle, LossWeights, compute_pair_loss, total_loss
from .matching import MatchResult, hungarian_match, match_cost_matrix, solve_assignment
from .segmentation import bce_with_logits, dice_loss, focal_loss, one_hot_targets, softplus
from .targets import FrameTargets, build_frame_targets, downsample_mask
from .track import (
    IOU_NEGATIVE,
    IOU_POSITIVE,
    TrackPairLabels,
    assign_track_pairs,
    track_aux_loss,
    track_contrastive_loss,
)

__all__ = [
    "IOU_NEGATIVE",
    "IOU_POSITIVE",
    "FrameTargets",
    "LossBundle",
    "LossWeights",
    "MatchResult",
    "TrackPairLabels",
    "assign_track_pairs",
    "bce_with_logits",
    "build_frame_targets",
    "compute_pair_loss",
    "dice_loss",
    "downsample_mask",
    "focal_loss",
    "hungarian_match",
    "match_cost_matrix",
    "one_hot_targets",
    "softplus",
    "solve_assignment",
    "track_aux_loss",
    "track_contrastive_loss",
    "total_loss",
]
