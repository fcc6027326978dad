"""Full video model: shared-weight per-frame segmenter plus the video heads.

Training runs on (key, reference) frame pairs: the reference frame decodes
vanilla, the key frame gets cross-frame fusion spliced in at the configured
stage, and both frames' stage outputs are supervised. Inference decodes one
frame at a time, carrying the fused last-stage input kernels forward as the
memory for the next frame. Clip mode instead decodes T frames independently
and fuses their final kernels temporally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..engine import Module, Tensor
from ..errors import ConfigError
from .config import ModelConfig
from .segmenter import Segmenter, StageHook, predict_masks
from .types import FeatureMap, KernelSet, StageOutput
from .video_heads import ClipFusion, EmbedHead, KernelFusion, KernelLinker


@dataclass
class PairOutput:
    key: list[StageOutput]
    ref: list[StageOutput]
    feat_key: FeatureMap
    feat_ref: FeatureMap

    @property
    def key_final(self) -> StageOutput:
        return self.key[-1]

    @property
    def ref_final(self) -> StageOutput:
        return self.ref[-1]


@dataclass
class FrameOutput:
    outputs: list[StageOutput]
    feat: FeatureMap
    fuse_memory: KernelSet  # kernels that entered the fusion stage (post-fusion)

    @property
    def final(self) -> StageOutput:
        return self.outputs[-1]


@dataclass
class ClipOutput:
    clip_kernels: KernelSet
    class_logits: Tensor  # [N_thing, num_thing_classes] from the clip kernels
    frame_mask_logits: list[Tensor]  # per frame, [N, h, w] from refined per-frame kernels
    frame_outputs: list[FrameOutput]


class VideoSegmenter(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        cfg.check()
        rng = rng if rng is not None else np.random.default_rng(cfg.init_seed)
        self.cfg = cfg
        self.segmenter = Segmenter(cfg, rng, dtype=dtype)
        self.embed_head = EmbedHead(cfg.channels, cfg.embed_dim, rng, dtype=dtype) if cfg.use_embed else None
        self.linker = KernelLinker(cfg.channels, cfg.heads, cfg.ffn_hidden, rng, dtype=dtype) if cfg.use_link else None
        self.fusion = KernelFusion(cfg.channels, cfg.heads, cfg.ffn_hidden, rng, dtype=dtype) if cfg.use_fuse else None
        self.clip_fusion = (
            ClipFusion(cfg.channels, cfg.heads, cfg.ffn_hidden, cfg.clip_fusion_layers, rng, dtype=dtype)
            if cfg.clip_mode
            else None
        )

    # -- building blocks ---------------------------------------------------

    def _fusion_hook(self, prev: KernelSet, sink: dict | None = None) -> StageHook:
        cfg = self.cfg

        def hook(idx: int, kernels: KernelSet, feat: FeatureMap, logits: Tensor) -> KernelSet:
            if self.fusion is None or idx != cfg.fusion_stage:
                if sink is not None and idx == cfg.fusion_stage:
                    sink["memory"] = kernels
                return kernels
            fused = self.fusion(
                prev.kernels,
                feat,
                logits,
                kernels.kernels,
                update_prev=cfg.fuse_update,
                attend_prev=cfg.fuse_attend_prev,
            )
            out = kernels.with_kernels(fused)
            if sink is not None:
                sink["memory"] = out
            return out

        return hook

    def _stage_input_kernels(self, outputs: list[StageOutput]) -> KernelSet:
        """Kernels entering the fusion stage, i.e. the previous stage's output."""
        s = self.cfg.fusion_stage
        if s == 1:
            return self.segmenter.initial_kernels()
        return outputs[s - 2].kernels

    def link_things(
        self,
        cur_things: Tensor,
        ref_things: Tensor,
        cur_rows: np.ndarray | None = None,
        ref_rows: np.ndarray | None = None,
    ) -> Tensor:
        if self.linker is None:
            return cur_things
        return self.linker(cur_things, ref_things, cur_rows=cur_rows, ref_rows=ref_rows)

    def embed_things(self, things: Tensor) -> Tensor:
        if self.embed_head is None:
            raise ConfigError("embedding head disabled in this configuration")
        return self.embed_head(things)

    # -- training path -----------------------------------------------------

    def forward_pair(self, image_key: np.ndarray | Tensor, image_ref: np.ndarray | Tensor) -> PairOutput:
        feat_ref = self.segmenter.encode(image_ref)
        ref_outputs = self.segmenter.decode(feat_ref)
        feat_key = self.segmenter.encode(image_key)
        hook = self._fusion_hook(self._stage_input_kernels(ref_outputs)) if self.fusion is not None else None
        key_outputs = self.segmenter.decode(feat_key, hook=hook)
        return PairOutput(key=key_outputs, ref=ref_outputs, feat_key=feat_key, feat_ref=feat_ref)

    # -- online inference path ----------------------------------------------

    def forward_frame(self, image: np.ndarray | Tensor, memory: KernelSet | None = None) -> FrameOutput:
        feat = self.segmenter.encode(image)
        sink: dict = {}
        if self.fusion is not None and memory is not None:
            hook = self._fusion_hook(memory, sink=sink)
        else:
            hook = self._memory_tap(sink)
        outputs = self.segmenter.decode(feat, hook=hook)
        return FrameOutput(outputs=outputs, feat=feat, fuse_memory=sink["memory"])

    def _memory_tap(self, sink: dict) -> StageHook:
        stage = self.cfg.fusion_stage

        def hook(idx: int, kernels: KernelSet, feat: FeatureMap, logits: Tensor) -> KernelSet:
            if idx == stage:
                sink["memory"] = kernels
            return kernels

        return hook

    # -- clip path -----------------------------------------------------------

    def forward_clip(self, images: list) -> ClipOutput:
        if self.clip_fusion is None:
            raise ConfigError("clip fusion disabled; set clip_mode")
        if not images:
            raise ConfigError("empty clip")
        frames = [self.forward_frame(img) for img in images]
        per_frame = [f.final.kernels.kernels for f in frames]
        clip, refined = self.clip_fusion(per_frame)
        roles = frames[0].final.kernels.roles
        clip_set = KernelSet(kernels=clip, roles=roles)
        masks = [predict_masks(refined[t], frames[t].feat) for t in range(len(frames))]
        class_logits = self.segmenter.stages[-1].classify(clip[clip_set.thing_slice])
        return ClipOutput(
            clip_kernels=clip_set,
            class_logits=class_logits,
            frame_mask_logits=masks,
            frame_outputs=frames,
        )
