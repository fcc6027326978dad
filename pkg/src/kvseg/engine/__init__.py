from .tensor import (
    Tensor,
    bilinear_matrix,
    concat,
    conv2d,
    logsumexp,
    no_grad,
    softmax,
    stack,
    upsample2_nearest,
    upsample_bilinear,
)
from .nn import FFN, MLP, Conv2d, LayerNorm, Linear, Module, ModuleList, MultiheadAttention, Parameter
from .optim import AdamW, clip_grad_norm

__all__ = [
    "Tensor",
    "bilinear_matrix",
    "concat",
    "conv2d",
    "logsumexp",
    "no_grad",
    "softmax",
    "stack",
    "upsample2_nearest",
    "upsample_bilinear",
    "FFN",
    "MLP",
    "Conv2d",
    "LayerNorm",
    "Linear",
    "Module",
    "ModuleList",
    "MultiheadAttention",
    "Parameter",
    "AdamW",
    "clip_grad_norm",
]
