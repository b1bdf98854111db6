"""Stateless differentiable ops on torch tensors.

Losses validate their inputs and raise ``ValueError`` on contract breaches
(shape mismatch, non-finite values, malformed one-hot targets).
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F


class NumericalError(RuntimeError):
    """A NaN/Inf appeared where the pipeline requires finite values."""


def check_finite(x: torch.Tensor, what: str = "tensor") -> None:
    if not bool(torch.isfinite(x).all()):
        raise NumericalError(f"non-finite values in {what}")


def smooth_l1(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean element-wise smooth-l1 with unit transition point.

    At ``|d| == 1`` the linear branch is taken, so the gradient there has
    magnitude exactly 1.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(pred.shape)} vs {tuple(target.shape)}")
    if pred.numel() == 0:
        raise ValueError("empty input")
    check_finite(pred, "smooth_l1 prediction")
    check_finite(target, "smooth_l1 target")
    return smooth_l1_terms(pred - target).mean()


def smooth_l1_terms(diff: torch.Tensor) -> torch.Tensor:
    ad = diff.abs()
    return torch.where(ad < 1.0, 0.5 * diff * diff, ad - 0.5)


def softmax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    shifted = x - x.amax(dim=dim, keepdim=True).detach()
    e = shifted.exp()
    return e / e.sum(dim=dim, keepdim=True)


def log_softmax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    shifted = x - x.amax(dim=dim, keepdim=True).detach()
    return shifted - shifted.exp().sum(dim=dim, keepdim=True).log()


def cross_entropy(logits: torch.Tensor, target_onehot: torch.Tensor) -> torch.Tensor:
    """Mean of ``-log softmax(logits)[hot]`` over all leading rows."""
    if logits.shape != target_onehot.shape:
        raise ValueError("logits and target must have the same shape")
    if logits.shape[-1] < 2:
        raise ValueError("cross_entropy needs K >= 2 classes")
    hot = target_onehot.reshape(-1, logits.shape[-1])
    if not bool(((hot == 0) | (hot == 1)).all()) or not bool((hot.sum(-1) == 1).all()):
        raise ValueError("target must be one-hot with exactly one hot entry per row")
    return cross_entropy_index(logits.reshape(-1, logits.shape[-1]), hot.argmax(-1))


def cross_entropy_index(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Cross-entropy with integer labels; ``logits`` is (N, K)."""
    check_finite(logits, "logits")
    lsm = log_softmax(logits, dim=-1)
    return -lsm.gather(-1, labels.long().reshape(-1, 1)).mean()


def gelu(x: torch.Tensor) -> torch.Tensor:
    """Exact erf-form GELU, ``0.5 x (1 + erf(x / sqrt 2))``, via the fused kernel."""
    return F.gelu(x)


def linear(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
    return F.linear(x, weight, bias)


def layer_norm(x: torch.Tensor, weight=None, bias=None, eps: float = 1e-5) -> torch.Tensor:
    return F.layer_norm(x, x.shape[-1:], weight, bias, eps)


def conv2d(x: torch.Tensor, weight: torch.Tensor, bias=None, stride: int = 1) -> torch.Tensor:
    # valid padding keeps spatially constant inputs constant
    return F.conv2d(x, weight, bias, stride=stride)


def adaptive_avg_pool2d(x: torch.Tensor, size) -> torch.Tensor:
    return F.adaptive_avg_pool2d(x, size)


def attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Unmasked scaled dot-product attention over (..., I, d_head) inputs."""
    return F.scaled_dot_product_attention(q, k, v)


def attention_weights(q: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
    return softmax(q @ k.transpose(-1, -2) / math.sqrt(q.shape[-1]), dim=-1)
