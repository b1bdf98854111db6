"""Finite-difference verification of reverse-mode gradients in float64."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import torch

from .functional import NumericalError


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    max_abs_error: float
    n_checked: int

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol

    def line(self, tol: float = 1e-4) -> str:
        status = "PASS" if self.passed(tol) else "FAIL"
        return f"{status} {self.name}: max_rel_err={self.max_rel_error:.3e} n={self.n_checked}"


def _scalar(out: torch.Tensor, proj: torch.Tensor | None) -> torch.Tensor:
    if out.numel() == 1:
        return out.reshape(())
    return (out * proj).sum()


def grad_check(
    fn: Callable[..., torch.Tensor],
    inputs: Sequence[torch.Tensor],
    step: float = 1e-4,
    params: Sequence[torch.Tensor] = (),
    name: str = "fn",
    max_entries: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare autograd gradients of ``fn(*inputs)`` with central differences.

    ``inputs`` and ``params`` are perturbed in place (and restored); they should
    be float64 leaves.  Non-scalar outputs are contracted with a fixed random
    projection.  The reported relative error is the max absolute discrepancy
    divided by the largest gradient magnitude (``0/0`` counts as 0).
    ``max_entries`` optionally subsamples coordinates per tensor.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    leaves = [t for t in list(inputs) + list(params)]
    for t in leaves:
        t.requires_grad_(True)
        t.grad = None
    gen = torch.Generator().manual_seed(seed)

    out = fn(*inputs)
    if not bool(torch.isfinite(out).all()):
        raise NumericalError(f"{name}: non-finite output")
    proj = None if out.numel() == 1 else torch.randn(out.shape, generator=gen, dtype=out.dtype)
    grads = torch.autograd.grad(_scalar(out, proj), leaves, allow_unused=True)

    max_abs, scale, n = 0.0, 0.0, 0
    with torch.no_grad():
        for leaf, g in zip(leaves, grads):
            g = torch.zeros_like(leaf) if g is None else g
            flat = leaf.view(-1)
            idx = torch.arange(flat.numel())
            if max_entries is not None and flat.numel() > max_entries:
                idx = torch.randperm(flat.numel(), generator=gen)[:max_entries]
            gflat = g.reshape(-1)
            for i in idx.tolist():
                orig = flat[i].item()
                flat[i] = orig + step
                fp = _scalar(fn(*inputs), proj).item()
                flat[i] = orig - step
                fm = _scalar(fn(*inputs), proj).item()
                flat[i] = orig
                num = (fp - fm) / (2.0 * step)
                ana = gflat[i].item()
                if num != num or ana != ana:
                    raise NumericalError(f"{name}: non-finite gradient")
                max_abs = max(max_abs, abs(num - ana))
                scale = max(scale, abs(num), abs(ana))
                n += 1
    rel = 0.0 if max_abs == 0.0 else max_abs / max(scale, 1e-300)
    return GradCheckReport(name, rel, max_abs, n)


def module_grad_check(module: torch.nn.Module, fn, inputs, name: str, **kw) -> GradCheckReport:
    """Grad-check ``fn(*inputs)`` w.r.t. the inputs and every parameter of ``module``."""
    module.double()
    inputs = [x.double().detach().clone() for x in inputs]
    params = [p for p in module.parameters() if p.requires_grad]
    return grad_check(fn, inputs, params=params, name=name, **kw)
