"""Iterative dynamic-kernel decoder.

Each stage refines the kernel set against the (fixed) frame features:

    1. assemble:   f_i = sum_xy sigmoid(prev_logits_i) * feat      (per kernel)
    2. update:     k'_i = g_f * phi1(f_i) + g_k * phi2(k_i)        (gated, row-local)
    3. interact:   self-attention + FFN over all kernels
    4. predict:    mask_logits_i = <k_i, feat(:, x, y)>, plus thing class logits

Stage 1 bootstraps from masks predicted by the learned static kernels. The
mask head is a pure inner product: all capacity lives in the kernels and the
feature map.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..engine import FFN, LayerNorm, Linear, Module, ModuleList, MultiheadAttention, Parameter, Tensor
from ..errors import ConfigError
from .backbone import Encoder, normalize_image
from .config import ModelConfig
from .types import FeatureMap, KernelSet, StageOutput, make_roles


def predict_masks(kernels: Tensor, feat: FeatureMap) -> Tensor:
    """[N, C] x [C, h, w] -> [N, h, w]; linear in both arguments."""
    c, h, w = feat.values.shape
    if kernels.shape[1] != c:
        raise ConfigError(f"kernel channels {kernels.shape[1]} != feature channels {c}")
    return (kernels @ feat.values.reshape(c, h * w)).reshape(kernels.shape[0], h, w)


def assemble_group_features(feat: FeatureMap, prev_mask_logits: Tensor) -> Tensor:
    """Sigmoid-weighted sum of feature columns per kernel: [N, C]."""
    c, h, w = feat.values.shape
    n = prev_mask_logits.shape[0]
    if prev_mask_logits.shape[1:] != (h, w):
        raise ConfigError(f"mask logits {prev_mask_logits.shape} do not match feature {h}x{w}")
    weights = prev_mask_logits.sigmoid().reshape(n, h * w)
    return weights @ feat.values.reshape(c, h * w).transpose(1, 0)


class KernelUpdate(Module):
    """Gated, row-local combine of assembled features with existing kernels.

    Gate layers start at zero so both gates open at exactly 0.5; there is no
    hidden normalization (the contract pins k' = 0.5 f + 0.5 k under forced
    identity maps).
    """

    def __init__(self, channels: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.gate_f = Linear(channels, channels, rng, dtype=dtype, zero_init=True)
        self.gate_k = Linear(channels, channels, rng, dtype=dtype, zero_init=True)
        self.phi_f = Linear(channels, channels, rng, dtype=dtype)
        self.phi_k = Linear(channels, channels, rng, dtype=dtype)
        self.psi = Linear(channels, channels, rng, dtype=dtype)

    def __call__(self, kernels: Tensor, group_feats: Tensor) -> Tensor:
        if not np.all(np.isfinite(group_feats.numpy())):
            raise ValueError("non-finite group features")
        mix = group_feats + self.psi(kernels)
        g_f = self.gate_f(mix).sigmoid()
        g_k = self.gate_k(mix).sigmoid()
        return g_f * self.phi_f(group_feats) + g_k * self.phi_k(kernels)


class KernelInteraction(Module):
    """Pre-norm self-attention + FFN with a final LayerNorm."""

    def __init__(self, channels: int, heads: int, ffn_hidden: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.norm_attn = LayerNorm(channels, dtype=dtype)
        self.attn = MultiheadAttention(channels, heads, rng, dtype=dtype)
        self.ffn = FFN(channels, ffn_hidden, rng, dtype=dtype)
        self.norm_out = LayerNorm(channels, dtype=dtype)

    def __call__(self, kernels: Tensor) -> Tensor:
        h = self.norm_attn(kernels)
        h = kernels + self.attn(h, h, h)
        return self.norm_out(self.ffn(h))


class ClassHead(Module):
    def __init__(self, channels: int, num_classes: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.norm = LayerNorm(channels, dtype=dtype)
        self.hidden = Linear(channels, channels, rng, dtype=dtype)
        self.out = Linear(channels, num_classes, rng, dtype=dtype)

    def __call__(self, thing_kernels: Tensor) -> Tensor:
        return self.out(self.hidden(self.norm(thing_kernels)).silu())


class DecoderStage(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.update = KernelUpdate(cfg.channels, rng, dtype=dtype)
        self.interact = KernelInteraction(cfg.channels, cfg.heads, cfg.ffn_hidden, rng, dtype=dtype)
        self.classify = ClassHead(cfg.channels, len(cfg.thing_classes), rng, dtype=dtype)

    def __call__(self, kernels: KernelSet, feat: FeatureMap, prev_logits: Tensor) -> StageOutput:
        grouped = assemble_group_features(feat, prev_logits)
        updated = self.update(kernels.kernels, grouped)
        refined = self.interact(updated)
        out_set = kernels.with_kernels(refined)
        return StageOutput(
            kernels=out_set,
            mask_logits=predict_masks(refined, feat),
            class_logits=self.classify(refined[kernels.thing_slice]),
        )


# hook signature: (stage_index_1based, kernels, feat, prev_logits) -> kernels
StageHook = Callable[[int, KernelSet, FeatureMap, Tensor], KernelSet]


class Segmenter(Module):
    """Backbone + neck + S decoder stages over a learned kernel bank."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        cfg.check()
        rng = rng if rng is not None else np.random.default_rng(cfg.init_seed)
        self.cfg = cfg
        self.encoder = Encoder(cfg.backbone_widths, cfg.channels, rng, dtype=dtype)
        self.stages = ModuleList([DecoderStage(cfg, rng, dtype=dtype) for _ in range(cfg.stages)])
        n_total = cfg.num_thing_kernels + len(cfg.stuff_classes)
        self.kernel_bank = Parameter((rng.standard_normal((n_total, cfg.channels)) * 0.1).astype(dtype))
        self._roles = make_roles(cfg.num_thing_kernels, cfg.stuff_classes)

    def initial_kernels(self) -> KernelSet:
        return KernelSet(kernels=self.kernel_bank, roles=self._roles)

    def encode(self, image: np.ndarray | Tensor) -> FeatureMap:
        if isinstance(image, np.ndarray):
            if image.dtype == np.uint8:
                image = normalize_image(image, dtype=self.kernel_bank.dtype)
            image = Tensor(image)
        return self.encoder(image)

    def decode(self, feat: FeatureMap, hook: StageHook | None = None) -> list[StageOutput]:
        kernels = self.initial_kernels()
        logits = predict_masks(kernels.kernels, feat)
        outputs: list[StageOutput] = []
        for idx, stage in enumerate(self.stages, start=1):
            if hook is not None:
                kernels = hook(idx, kernels, feat, logits)
            out = stage(kernels, feat, logits)
            outputs.append(out)
            kernels, logits = out.kernels, out.mask_logits
        return outputs

    def forward_image(self, image: np.ndarray | Tensor) -> list[StageOutput]:
        return self.decode(self.encode(image))
