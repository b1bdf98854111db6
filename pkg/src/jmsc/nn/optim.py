"""AdamW with decoupled weight decay, plus the learning-rate / momentum schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from .functional import NumericalError


@dataclass
class OptimizerState:
    lr: float = 1e-3
    weight_decay: float = 0.0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    exp_avg: list[torch.Tensor] = field(default_factory=list)
    exp_avg_sq: list[torch.Tensor] = field(default_factory=list)


@torch.no_grad()
def adamw_step(params, grads, state: OptimizerState) -> None:
    """One in-place AdamW update of ``params`` given matching ``grads``.

    Weight decay ``p <- p * (1 - lr*wd)`` is applied before the moment update.
    Raises ``NumericalError`` (and leaves everything untouched) if any gradient
    is non-finite.
    """
    params, grads = list(params), list(grads)
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for p, g in zip(params, grads):
        if g is not None and p.shape != g.shape:
            raise ValueError(f"gradient shape {tuple(g.shape)} != parameter shape {tuple(p.shape)}")
    for g in grads:
        if g is not None and not bool(torch.isfinite(g).all()):
            raise NumericalError("non-finite gradient; optimizer step aborted")
    if not state.exp_avg:
        state.exp_avg = [torch.zeros_like(p) for p in params]
        state.exp_avg_sq = [torch.zeros_like(p) for p in params]
    elif len(state.exp_avg) != len(params):
        raise ValueError("optimizer state does not match parameter list")

    state.step += 1
    b1, b2 = state.betas
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    lr, wd = state.lr, state.weight_decay
    for p, g, m, v in zip(params, grads, state.exp_avg, state.exp_avg_sq):
        if wd:
            p.mul_(1.0 - lr * wd)
        if g is None:
            continue
        m.mul_(b1).add_(g, alpha=1.0 - b1)
        v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
        denom = (v / bc2).sqrt_().add_(state.eps)
        p.addcdiv_(m, denom, value=-lr / bc1)


class AdamW:
    """Thin object wrapper binding a parameter list to an ``OptimizerState``."""

    def __init__(self, params, lr=1e-3, weight_decay=0.0, betas=(0.9, 0.999), eps=1e-8):
        self.params = [p for p in params if p.requires_grad]
        self.state = OptimizerState(lr=lr, weight_decay=weight_decay, betas=tuple(betas), eps=eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adamw_step(self.params, [p.grad for p in self.params], self.state)

    def state_tensors(self) -> dict[str, torch.Tensor]:
        out = {"step": torch.tensor([float(self.state.step)], dtype=torch.float64)}
        for i, (m, v) in enumerate(zip(self.state.exp_avg, self.state.exp_avg_sq)):
            out[f"m.{i}"] = m
            out[f"v.{i}"] = v
        return out

    def load_state_tensors(self, tensors) -> None:
        self.state.step = int(tensors["step"][0])
        n = len(self.params)
        if self.state.step and f"m.{n - 1}" in tensors:
            self.state.exp_avg = [torch.as_tensor(tensors[f"m.{i}"]).clone() for i in range(n)]
            self.state.exp_avg_sq = [torch.as_tensor(tensors[f"v.{i}"]).clone() for i in range(n)]


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    """Cosine annealing from ``base_lr`` at step 0 to exactly 0 at the last step."""
    if total_steps <= 1:
        return base_lr
    frac = min(step, total_steps - 1) / (total_steps - 1)
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * frac))


def linear_momentum(step: int, total_steps: int, start: float, end: float) -> float:
    if total_steps <= 1:
        return end
    frac = min(step, total_steps - 1) / (total_steps - 1)
    return start + (end - start) * frac
