"""Bipartite assignment of instance kernels to ground-truth things.

The cost is mask-driven: negated class probability plus pixelwise binary
cross-entropy plus a dice overlap cost, weighted by the same coefficients the
loss uses. Costs are plain float64 numpy (the assignment is a discrete
decision, no gradients flow through it); the optimum comes from scipy's
linear_sum_assignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..data import ClassTable
from ..errors import ConfigError
from ..model import StageOutput
from .targets import FrameTargets

DICE_EPS = 1e-6


@dataclass
class MatchResult:
    pairs: list[tuple[int, int]]  # (kernel index, gt thing index)
    cost_matrix: np.ndarray  # [N_thing, G]
    unmatched_kernels: frozenset[int]

    @property
    def kernel_to_gt(self) -> dict[int, int]:
        return dict(self.pairs)

    def matched_kernel_mask(self, n_thing: int) -> np.ndarray:
        mask = np.zeros(n_thing, dtype=bool)
        for k, _ in self.pairs:
            mask[k] = True
        return mask


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def match_cost_matrix(
    class_logits: np.ndarray,
    mask_logits: np.ndarray,
    targets: FrameTargets,
    classes: ClassTable,
    w_cls: float,
    w_ce: float,
    w_dice: float,
) -> np.ndarray:
    n = mask_logits.shape[0]
    g = targets.num_things
    if g == 0:
        return np.zeros((n, 0), dtype=np.float64)
    flat_logits = mask_logits.reshape(n, -1).astype(np.float64)
    flat_gt = targets.thing_masks.reshape(g, -1)
    hw = flat_logits.shape[1]

    probs = _sigmoid(class_logits.astype(np.float64))
    gt_cols = np.array([classes.thing_index(int(c)) for c in targets.thing_classes], dtype=np.int64)
    cls_cost = -probs[:, gt_cols]

    ce_cost = _softplus(flat_logits).mean(axis=1, keepdims=True) - (flat_logits @ flat_gt.T) / hw

    p = _sigmoid(flat_logits)
    dice_num = 2.0 * (p @ flat_gt.T) + DICE_EPS
    dice_den = (p * p).sum(axis=1, keepdims=True) + (flat_gt * flat_gt).sum(axis=1)[None, :] + DICE_EPS
    dice_cost = 1.0 - dice_num / dice_den

    return w_cls * cls_cost + w_ce * ce_cost + w_dice * dice_cost


def hungarian_match(
    stage_out: StageOutput,
    targets: FrameTargets,
    classes: ClassTable,
    w_cls: float = 2.0,
    w_ce: float = 1.0,
    w_dice: float = 4.0,
) -> MatchResult:
    n_thing = stage_out.class_logits.shape[0]
    g = targets.num_things
    if g > n_thing:
        raise ConfigError(f"{g} ground-truth things exceed the {n_thing} instance kernels")
    cost = match_cost_matrix(
        stage_out.class_logits.numpy(),
        stage_out.mask_logits.numpy()[:n_thing],
        targets,
        classes,
        w_cls,
        w_ce,
        w_dice,
    )
    return solve_assignment(cost)


def solve_assignment(cost: np.ndarray) -> MatchResult:
    n = cost.shape[0]
    if cost.shape[1] == 0:
        return MatchResult(pairs=[], cost_matrix=cost, unmatched_kernels=frozenset(range(n)))
    rows, cols = linear_sum_assignment(cost)
    pairs = sorted(zip(rows.tolist(), cols.tolist()), key=lambda rc: rc[1])
    matched = {r for r, _ in pairs}
    return MatchResult(
        pairs=pairs,
        cost_matrix=cost,
        unmatched_kernels=frozenset(i for i in range(n) if i not in matched),
    )
