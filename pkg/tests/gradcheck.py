"""Central finite-difference gradient checking.

Every analytic backward pass in the engine and the model is validated against

    (f(x + d) - f(x - d)) / (2 d)

in double precision on small shapes. ``check_grads`` perturbs every element of
every leaf (parameters and flagged inputs), compares to the accumulated
analytic gradient, and returns the worst relative error.
"""

from __future__ import annotations

import numpy as np

from kvseg.engine import Tensor
from kvseg.engine.nn import Module

DELTA = 1e-5
TOL = 1e-4


def rel_err(a: float, b: float, loss_scale: float = 1.0) -> float:
    # Central differences resolve gradients down to roughly eps*|loss|/delta,
    # so the comparison floor must grow with the loss magnitude; otherwise
    # exactly-zero gradients (for example a key-projection bias, which softmax
    # provably cancels) trip on fp cancellation noise of order 1e-11*|loss|.
    scale = max(abs(a), abs(b), 1e-6 * max(1.0, loss_scale))
    return abs(a - b) / scale


def check_tensor_grads(fn, leaves: list[Tensor], delta: float = DELTA) -> float:
    """fn() -> scalar Tensor built from `leaves`; returns max relative error."""
    for leaf in leaves:
        leaf.grad = None
        assert leaf.data.dtype == np.float64, "gradient checks run in float64"
    out = fn()
    out.backward()
    loss_scale = abs(out.item())
    analytic = [leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves]
    worst = 0.0
    for leaf, grad in zip(leaves, analytic):
        flat = leaf.data.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + delta
            hi = fn().item()
            flat[i] = orig - delta
            lo = fn().item()
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * delta)
            worst = max(worst, rel_err(gflat[i], numeric, loss_scale))
    return worst


def check_module_grads(module: Module, fn, extra_leaves: list[Tensor] | None = None, delta: float = DELTA) -> float:
    leaves = list(module.parameters()) + list(extra_leaves or [])
    return check_tensor_grads(fn, leaves, delta=delta)
