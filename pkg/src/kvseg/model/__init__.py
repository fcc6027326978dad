"""Dynamic-kernel segmentation model and its video heads."""

from .backbone import NECK_STRIDE, TOTAL_STRIDE, Encoder, normalize_image, sinusoidal_positions
from .config import ModelConfig
from .segmenter import (
    ClassHead,
    DecoderStage,
    KernelInteraction,
    KernelUpdate,
    Segmenter,
    assemble_group_features,
    predict_masks,
)
from .types import THING_ROLE, FeatureMap, KernelSet, StageOutput, make_roles
from .video import ClipOutput, FrameOutput, PairOutput, VideoSegmenter
from .video_heads import ClipFusion, EmbedHead, KernelEmbeddings, KernelFusion, KernelLinker

__all__ = [
    "NECK_STRIDE",
    "TOTAL_STRIDE",
    "THING_ROLE",
    "ClassHead",
    "ClipFusion",
    "ClipOutput",
    "DecoderStage",
    "EmbedHead",
    "Encoder",
    "FeatureMap",
    "FrameOutput",
    "KernelEmbeddings",
    "KernelFusion",
    "KernelInteraction",
    "KernelLinker",
    "KernelSet",
    "KernelUpdate",
    "ModelConfig",
    "PairOutput",
    "Segmenter",
    "StageOutput",
    "VideoSegmenter",
    "assemble_group_features",
    "make_roles",
    "normalize_image",
    "predict_masks",
    "sinusoidal_positions",
]
