"""Video extensions over the kernel decoder.

Four pieces, all operating on kernel rows rather than pixels:

    EmbedHead     association embeddings for cross-frame identity matching
    KernelLinker  refines current-frame kernels by attending into a reference
                  frame's kernels (queries = current, keys/values = reference)
    KernelFusion  re-weights the previous frame's kernels on current features,
                  then jointly self-attends over [updated_prev ; cur] and keeps
                  the current rows
    ClipFusion    stacked temporal self-attention over all frames of a clip;
                  the clip-level kernel is the temporal mean per index

Row masks use the same convention as the attention layer: True rows take part,
False rows are excluded (linker) or passed through untouched (blend masks).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..engine import FFN, Linear, Module, ModuleList, MultiheadAttention, Tensor, concat
from ..errors import ConfigError
from .segmenter import KernelUpdate, assemble_group_features
from .types import FeatureMap


@dataclass
class KernelEmbeddings:
    embeddings: Tensor  # [N, D]
    source_frame: int


class EmbedHead(Module):
    """Row-local projection + two residual feed-forward blocks."""

    def __init__(self, channels: int, dim: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.proj = Linear(channels, dim, rng, dtype=dtype)
        self.block1 = FFN(dim, 2 * dim, rng, dtype=dtype)
        self.block2 = FFN(dim, 2 * dim, rng, dtype=dtype)

    def __call__(self, kernels: Tensor) -> Tensor:
        return self.block2(self.block1(self.proj(kernels)))


class KernelLinker(Module):
    """linked = FFN(attend(cur -> ref) + cur), with optional row gating.

    ref_rows masks which reference rows may be attended to (False = hidden);
    cur_rows masks which current rows are replaced by their linked version
    (False rows pass through unchanged). Masking everything out is rejected
    upstream by requiring at least one visible reference row.
    """

    def __init__(self, channels: int, heads: int, ffn_hidden: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.attn = MultiheadAttention(channels, heads, rng, dtype=dtype)
        self.ffn = FFN(channels, ffn_hidden, rng, dtype=dtype)

    def __call__(
        self,
        cur: Tensor,
        ref: Tensor,
        cur_rows: np.ndarray | None = None,
        ref_rows: np.ndarray | None = None,
    ) -> Tensor:
        if cur.shape[1] != ref.shape[1]:
            raise ConfigError(f"channel mismatch {cur.shape[1]} vs {ref.shape[1]}")
        if ref_rows is not None and not ref_rows.any():
            raise ConfigError("linking needs at least one visible reference row")
        linked = self.ffn(self.attn(cur, ref, ref, key_mask=ref_rows) + cur)
        if cur_rows is None:
            return linked
        keep = cur_rows.astype(linked.dtype)[:, None]
        return linked * keep + cur * (1.0 - keep)


class KernelFusion(Module):
    """Cross-frame fusion at the entry of a decoder stage.

    update_prev=False skips the feature re-weighting of the previous kernels;
    attend_prev=False hides the previous rows from attention, so the output
    depends on them only through the (possibly skipped) update step.
    """

    def __init__(self, channels: int, heads: int, ffn_hidden: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.update = KernelUpdate(channels, rng, dtype=dtype)
        self.attn = MultiheadAttention(channels, heads, rng, dtype=dtype)
        self.ffn = FFN(channels, ffn_hidden, rng, dtype=dtype)

    def __call__(
        self,
        prev: Tensor,
        cur_feat: FeatureMap,
        cur_prev_mask_logits: Tensor,
        cur: Tensor,
        update_prev: bool = True,
        attend_prev: bool = True,
    ) -> Tensor:
        if prev.shape != cur.shape:
            raise ConfigError(f"kernel shape mismatch {prev.shape} vs {cur.shape}")
        n = cur.shape[0]
        if update_prev:
            grouped = assemble_group_features(cur_feat, cur_prev_mask_logits)
            prev = self.update(prev, grouped)
        joint = concat([prev, cur], axis=0)
        mask = None
        if not attend_prev:
            mask = np.concatenate([np.zeros(n, dtype=bool), np.ones(n, dtype=bool)])
        fused = self.ffn(joint + self.attn(joint, joint, joint, key_mask=mask))
        return fused[n:]


class ClipFusion(Module):
    """Temporal self-attention over all T*N kernels of a clip."""

    def __init__(self, channels: int, heads: int, ffn_hidden: int, layers: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.attns = ModuleList([MultiheadAttention(channels, heads, rng, dtype=dtype) for _ in range(layers)])
        self.ffns = ModuleList([FFN(channels, ffn_hidden, rng, dtype=dtype) for _ in range(layers)])

    def __call__(self, per_frame: list[Tensor]) -> tuple[Tensor, list[Tensor]]:
        """Returns (clip_kernels [N, C], refined per-frame kernel rows)."""
        if not per_frame:
            raise ConfigError("empty clip")
        n = per_frame[0].shape[0]
        for k in per_frame:
            if k.shape != per_frame[0].shape:
                raise ConfigError("ragged kernel sets across frames")
        x = concat(per_frame, axis=0)
        for attn, ffn in zip(self.attns, self.ffns):
            x = ffn(x + attn(x, x, x))
        t = len(per_frame)
        clip = x.reshape(t, n, x.shape[1]).mean(axis=0)
        return clip, [x[i * n : (i + 1) * n] for i in range(t)]
