"""Dense-tensor core: differentiable ops, layers, AdamW and gradient checking.

Tensors and reverse-mode differentiation come from torch; the losses,
optimizer update, attention block, GRU and the finite-difference harness
are defined here.
"""

from .functional import (
    NumericalError,
    adaptive_avg_pool2d,
    check_finite,
    conv2d,
    cross_entropy,
    cross_entropy_index,
    gelu,
    layer_norm,
    linear,
    smooth_l1,
    smooth_l1_terms,
    softmax,
)
from .gradcheck import GradCheckReport, grad_check, module_grad_check
from .layers import GRU, MLP, MultiHeadAttention, Transformer, TransformerBlock, init_weights
from .optim import AdamW, OptimizerState, adamw_step, cosine_lr, linear_momentum

__all__ = [
    "AdamW", "GRU", "GradCheckReport", "MLP", "MultiHeadAttention", "NumericalError",
    "OptimizerState", "Transformer", "TransformerBlock", "adamw_step", "adaptive_avg_pool2d",
    "check_finite", "conv2d", "cosine_lr", "cross_entropy", "cross_entropy_index", "gelu",
    "grad_check", "init_weights", "layer_norm", "linear", "linear_momentum", "module_grad_check",
    "smooth_l1", "smooth_l1_terms", "softmax",
]
