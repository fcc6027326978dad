"""Cross-frame identity supervision: pair labeling and the two losses.

Anchors are taken only from kernels that won their frame's assignment, and a
matched kernel becomes a usable sample only when its binarized mask overlaps
its object above IOU_POSITIVE. Reference kernels in the dead band between
IOU_NEGATIVE and IOU_POSITIVE are excluded entirely, mirroring the strict
inequalities of the labeling rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..engine import Tensor, concat, logsumexp
from ..errors import DataError
from .matching import MatchResult
from .targets import FrameTargets

IOU_POSITIVE = 0.7
IOU_NEGATIVE = 0.3


@dataclass
class TrackPairLabels:
    positives: list[tuple[int, int]] = field(default_factory=list)  # (key kernel, ref kernel)
    negatives: list[tuple[int, int]] = field(default_factory=list)
    num_key_samples: int = 0  # V: valid anchor kernels in the key frame
    num_ref_samples: int = 0  # K: valid kernels in the reference frame

    def validate(self) -> None:
        if set(self.positives) & set(self.negatives):
            raise ValueError("a pair appears as both positive and negative")


def _mask_iou(pred: np.ndarray, gt: np.ndarray) -> float:
    inter = np.logical_and(pred, gt).sum()
    union = np.logical_or(pred, gt).sum()
    return float(inter) / float(union) if union else 0.0


def _valid_samples(pred_masks: np.ndarray, targets: FrameTargets, match: MatchResult) -> dict[int, int]:
    """kernel index -> track id, for matched kernels whose IoU beats the bar."""
    out: dict[int, int] = {}
    for kernel, gt in match.pairs:
        iou = _mask_iou(pred_masks[kernel], targets.thing_masks[gt] > 0.5)
        if iou > IOU_POSITIVE:
            out[kernel] = int(targets.thing_track_ids[gt])
    return out


def assign_track_pairs(
    pred_masks_key: np.ndarray,
    pred_masks_ref: np.ndarray,
    targets_key: FrameTargets,
    targets_ref: FrameTargets,
    match_key: MatchResult,
    match_ref: MatchResult,
) -> TrackPairLabels:
    if targets_key.num_things and np.any(targets_key.thing_track_ids <= 0):
        raise DataError("ground-truth things without track ids")
    if targets_ref.num_things and np.any(targets_ref.thing_track_ids <= 0):
        raise DataError("ground-truth things without track ids")

    key_samples = _valid_samples(pred_masks_key, targets_key, match_key)
    ref_samples = _valid_samples(pred_masks_ref, targets_ref, match_ref)
    ref_track_masks = {
        int(tid): targets_ref.thing_masks[g] > 0.5 for g, tid in enumerate(targets_ref.thing_track_ids)
    }

    labels = TrackPairLabels(num_key_samples=len(key_samples), num_ref_samples=len(ref_samples))
    for key_kernel, track in sorted(key_samples.items()):
        gt_ref_mask = ref_track_masks.get(track)
        for ref_kernel, _ in match_ref.pairs:
            if ref_samples.get(ref_kernel) == track:
                labels.positives.append((key_kernel, ref_kernel))
                continue
            iou = _mask_iou(pred_masks_ref[ref_kernel], gt_ref_mask) if gt_ref_mask is not None else 0.0
            if iou < IOU_NEGATIVE:
                labels.negatives.append((key_kernel, ref_kernel))
    labels.validate()
    return labels


def track_contrastive_loss(
    emb_key: Tensor, emb_ref: Tensor, labels: TrackPairLabels
) -> tuple[Tensor, bool]:
    """Per-anchor softmax contrast of its positives against its negatives.

    Averaged over the V anchor samples; (zero, False) when nothing is labeled.
    """
    if not labels.positives or labels.num_key_samples == 0:
        return Tensor(np.zeros(())), False
    neg_by_anchor: dict[int, list[int]] = {}
    for k, r in labels.negatives:
        neg_by_anchor.setdefault(k, []).append(r)

    terms: list[Tensor] = []
    for key_kernel, ref_kernel in labels.positives:
        anchor = emb_key[key_kernel]
        pos_logit = (anchor * emb_ref[ref_kernel]).sum().reshape(1)
        negs = neg_by_anchor.get(key_kernel, [])
        if negs:
            neg_logits = (emb_ref[np.array(negs, dtype=np.int64)] * anchor.reshape(1, -1)).sum(axis=1)
            all_logits = concat([pos_logit, neg_logits], axis=0)
        else:
            all_logits = pos_logit
        terms.append(logsumexp(all_logits, axis=0) - pos_logit.reshape(()))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / labels.num_key_samples), True


def track_aux_loss(
    emb_key: Tensor, emb_ref: Tensor, labels: TrackPairLabels
) -> tuple[Tensor, int]:
    """Mean squared gap between pair cosine and its 0/1 target.

    Degenerate zero-norm embeddings contribute their constant (cos := 0) term
    without gradients; the count of such pairs is returned for logging.
    """
    pairs = [(k, r, 1.0) for k, r in labels.positives] + [(k, r, 0.0) for k, r in labels.negatives]
    if not pairs:
        return Tensor(np.zeros(())), 0

    key_np = emb_key.numpy()
    ref_np = emb_ref.numpy()
    zero_norm = 0
    constant = 0.0
    live: list[tuple[int, int, float]] = []
    for k, r, c in pairs:
        if np.linalg.norm(key_np[k]) == 0.0 or np.linalg.norm(ref_np[r]) == 0.0:
            zero_norm += 1
            constant += (0.0 - c) ** 2
        else:
            live.append((k, r, c))

    total = Tensor(np.asarray(constant))
    if live:
        ki = np.array([k for k, _, _ in live], dtype=np.int64)
        ri = np.array([r for _, r, _ in live], dtype=np.int64)
        cs = np.array([c for _, _, c in live])
        vs = emb_key[ki]
        ks = emb_ref[ri]
        dots = (vs * ks).sum(axis=1)
        norms = ((vs * vs).sum(axis=1)).sqrt() * ((ks * ks).sum(axis=1)).sqrt()
        gap = dots / norms - cs
        total = total + (gap * gap).sum()
    return total * (1.0 / len(pairs)), zero_norm
