"""Weighted total training loss over a frame pair."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import ClassTable, PanopticFrame
from ..engine import Tensor, upsample_bilinear
from ..model import PairOutput, StageOutput, VideoSegmenter
from .matching import MatchResult, hungarian_match
from .segmentation import bce_with_logits, dice_loss, focal_loss, one_hot_targets
from .targets import FrameTargets, build_frame_targets
from .track import TrackPairLabels, assign_track_pairs, track_aux_loss, track_contrastive_loss


@dataclass(frozen=True)
class LossWeights:
    w_cls: float = 2.0
    w_ce: float = 1.0
    w_dice: float = 4.0
    w_track: float = 0.25
    w_aux: float = 1.0

    def to_dict(self) -> dict:
        return {
            "w_cls": self.w_cls,
            "w_ce": self.w_ce,
            "w_dice": self.w_dice,
            "w_track": self.w_track,
            "w_aux": self.w_aux,
        }


@dataclass
class LossBundle:
    l_cls: float
    l_ce: float
    l_dice: float
    l_track: float
    l_aux: float
    total: float
    weights: LossWeights
    total_tensor: Tensor
    no_positives: bool = False
    zero_norm_pairs: int = 0


def _zero() -> Tensor:
    return Tensor(np.zeros(()))


def at_resolution(out: StageOutput, out_hw: tuple[int, int]) -> StageOutput:
    """The stage with its mask logits bilinearly upsampled to the target grid.

    Supervising at ground-truth resolution (instead of downsampling targets to
    the logit stride) lets the model place boundaries between feature cells;
    block-majority targets cap achievable mask IoU well below 1 on curved
    shapes. No-op when the resolutions already agree, which keeps same-grid
    fixtures exact.
    """
    if tuple(out.mask_logits.shape[1:]) == tuple(out_hw):
        return out
    return StageOutput(
        kernels=out.kernels,
        mask_logits=upsample_bilinear(out.mask_logits, out_hw),
        class_logits=out.class_logits,
    )


def _frame_seg_losses(
    outputs: list[StageOutput],
    targets: FrameTargets,
    classes: ClassTable,
    weights: LossWeights,
    match_final: bool = True,
) -> tuple[Tensor, Tensor, Tensor, list[MatchResult]]:
    """Deep supervision: sum focal/bce/dice over all stages of one frame.

    With ``match_final`` the kernel-object assignment is solved once on the
    last stage and reused for every auxiliary stage; per-stage matching lets
    stages disagree, which whipsaws the kernels early in training.
    """
    l_cls, l_ce, l_dice = _zero(), _zero(), _zero()
    matches: list[MatchResult] = []
    gt_cols = np.array([classes.thing_index(int(c)) for c in targets.thing_classes], dtype=np.int64)
    shared: MatchResult | None = None
    if match_final and outputs:
        shared = hungarian_match(
            at_resolution(outputs[-1], targets.shape), targets, classes, weights.w_cls, weights.w_ce, weights.w_dice
        )
    for out in outputs:
        out = at_resolution(out, targets.shape)
        n_thing = out.class_logits.shape[0]
        match = shared if shared is not None else hungarian_match(
            out, targets, classes, weights.w_cls, weights.w_ce, weights.w_dice
        )
        matches.append(match)

        onehot = one_hot_targets(n_thing, out.class_logits.shape[1], match.pairs, gt_cols)
        l_cls = l_cls + focal_loss(out.class_logits, onehot, normalizer=max(1, len(match.pairs)))

        mask_rows: list[Tensor] = []
        mask_targets: list[np.ndarray] = []
        if match.pairs:
            kernel_idx = np.array([k for k, _ in match.pairs], dtype=np.int64)
            gt_idx = np.array([g for _, g in match.pairs], dtype=np.int64)
            mask_rows.append(out.mask_logits[kernel_idx])
            mask_targets.append(targets.thing_masks[gt_idx])
        if targets.stuff_masks.shape[0]:
            mask_rows.append(out.mask_logits[n_thing:])
            mask_targets.append(targets.stuff_masks)
        if mask_rows:
            logits = mask_rows[0] if len(mask_rows) == 1 else _concat_rows(mask_rows)
            gts = np.concatenate(mask_targets, axis=0)
            l_ce = l_ce + bce_with_logits(logits, gts)
            l_dice = l_dice + dice_loss(logits, gts)
    return l_cls, l_ce, l_dice, matches


def _concat_rows(rows: list[Tensor]) -> Tensor:
    from ..engine import concat

    return concat(rows, axis=0)


def total_loss(
    key_outputs: list[StageOutput],
    ref_outputs: list[StageOutput],
    targets_key: FrameTargets,
    targets_ref: FrameTargets,
    classes: ClassTable,
    weights: LossWeights,
    embeddings: tuple[Tensor, Tensor] | None = None,
    labels: TrackPairLabels | None = None,
) -> LossBundle:
    ck, cek, cdk, _ = _frame_seg_losses(key_outputs, targets_key, classes, weights)
    cr, cer, cdr, _ = _frame_seg_losses(ref_outputs, targets_ref, classes, weights)
    l_cls = ck + cr
    l_ce = cek + cer
    l_dice = cdk + cdr

    no_positives = False
    zero_norm = 0
    if embeddings is not None and labels is not None:
        emb_key, emb_ref = embeddings
        l_track, had_pos = track_contrastive_loss(emb_key, emb_ref, labels)
        no_positives = not had_pos
        l_aux, zero_norm = track_aux_loss(emb_key, emb_ref, labels)
    else:
        l_track, l_aux = _zero(), _zero()

    total = (
        l_cls * weights.w_cls
        + l_ce * weights.w_ce
        + l_dice * weights.w_dice
        + l_track * weights.w_track
        + l_aux * weights.w_aux
    )
    return LossBundle(
        l_cls=float(l_cls.item()),
        l_ce=float(l_ce.item()),
        l_dice=float(l_dice.item()),
        l_track=float(l_track.item()),
        l_aux=float(l_aux.item()),
        total=float(total.item()),
        weights=weights,
        total_tensor=total,
        no_positives=no_positives,
        zero_norm_pairs=zero_norm,
    )


def compute_pair_loss(
    model: VideoSegmenter,
    pair: PairOutput,
    gt_key: PanopticFrame,
    gt_ref: PanopticFrame,
    classes: ClassTable,
    weights: LossWeights,
) -> LossBundle:
    """Match, label, embed (respecting the model's feature flags), combine."""
    out_hw = gt_key.shape
    targets_key = build_frame_targets(gt_key, classes, out_hw)
    targets_ref = build_frame_targets(gt_ref, classes, out_hw)

    embeddings = None
    labels = None
    if model.embed_head is not None:
        cfg = model.cfg
        w = weights
        key_final = at_resolution(pair.key_final, out_hw)
        ref_final = at_resolution(pair.ref_final, out_hw)
        match_key = hungarian_match(key_final, targets_key, classes, w.w_cls, w.w_ce, w.w_dice)
        match_ref = hungarian_match(ref_final, targets_ref, classes, w.w_cls, w.w_ce, w.w_dice)
        n_thing = cfg.num_thing_kernels
        pred_key = key_final.mask_logits.numpy()[:n_thing] > 0.0
        pred_ref = ref_final.mask_logits.numpy()[:n_thing] > 0.0
        labels = assign_track_pairs(pred_key, pred_ref, targets_key, targets_ref, match_key, match_ref)

        key_things = pair.key_final.kernels.kernels[pair.key_final.kernels.thing_slice]
        ref_things = pair.ref_final.kernels.kernels[pair.ref_final.kernels.thing_slice]
        if model.linker is not None and not cfg.embed_prelink:
            cur_rows = match_key.matched_kernel_mask(n_thing)
            ref_rows = match_ref.matched_kernel_mask(n_thing)
            if cur_rows.any() and ref_rows.any():
                key_things = model.link_things(key_things, ref_things, cur_rows=cur_rows, ref_rows=ref_rows)
        embeddings = (model.embed_things(key_things), model.embed_things(ref_things))

    return total_loss(
        pair.key, pair.ref, targets_key, targets_ref, classes, weights, embeddings=embeddings, labels=labels
    )
