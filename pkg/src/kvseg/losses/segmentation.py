"""Differentiable per-frame segmentation losses (focal, pixel BCE, dice).

Everything here takes autodiff tensors for predictions and plain numpy for
targets; each function reduces to a scalar tensor. Numerical stability comes
from the softplus identity bce(x, g) = softplus(x) - x*g, with softplus
computed as a two-term log-sum-exp.
"""

from __future__ import annotations

import numpy as np

from ..engine import Tensor, logsumexp, stack

FOCAL_GAMMA = 2.0
FOCAL_ALPHA = 0.25
DICE_EPS = 1e-6


def softplus(x: Tensor) -> Tensor:
    zeros = Tensor(np.zeros_like(x.numpy()))
    return logsumexp(stack([zeros, x], axis=0), axis=0)


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean stable binary cross-entropy; zero tensor when targets are empty."""
    if targets.size == 0:
        return Tensor(np.zeros(()))
    return (softplus(logits) - logits * targets).mean()


def focal_loss(
    class_logits: Tensor,
    target_onehot: np.ndarray,
    normalizer: float,
    gamma: float = FOCAL_GAMMA,
    alpha: float = FOCAL_ALPHA,
) -> Tensor:
    """Sigmoid focal loss summed over kernel/class entries / normalizer.

    Rows without an object carry an all-zero target row, which is how
    unmatched kernels are pushed toward predicting nothing.
    """
    if target_onehot.size == 0:
        return Tensor(np.zeros(()))
    t = target_onehot.astype(class_logits.numpy().dtype)
    p = class_logits.sigmoid()
    p_t = p * t + (1.0 - p) * (1.0 - t)
    alpha_t = alpha * t + (1.0 - alpha) * (1.0 - t)
    bce = softplus(class_logits) - class_logits * t
    loss = ((1.0 - p_t).pow(gamma) * bce * alpha_t).sum()
    return loss * (1.0 / max(normalizer, 1.0))


def dice_loss(mask_logits: Tensor, targets: np.ndarray, eps: float = DICE_EPS) -> Tensor:
    """Mean over mask rows of 1 - 2|pg| / (|p|^2 + |g|^2), p = sigmoid(logits)."""
    if targets.size == 0 or targets.shape[0] == 0:
        return Tensor(np.zeros(()))
    m = targets.shape[0]
    p = mask_logits.sigmoid().reshape(m, -1)
    g = targets.reshape(m, -1).astype(mask_logits.numpy().dtype)
    num = (p * g).sum(axis=1) * 2.0 + eps
    den = (p * p).sum(axis=1) + (g * g).sum(axis=1) + eps
    return (1.0 - num / den).mean()


def one_hot_targets(num_kernels: int, num_classes: int, pairs: list[tuple[int, int]], gt_class_cols: np.ndarray) -> np.ndarray:
    onehot = np.zeros((num_kernels, num_classes), dtype=np.float64)
    for kernel, gt in pairs:
        onehot[kernel, gt_class_cols[gt]] = 1.0
    return onehot
