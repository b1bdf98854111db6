"""Trainable building blocks: MLP, single-layer GRU, pre-norm transformer."""

from __future__ import annotations

import torch
from torch import nn

from . import functional as Fn


class GELU(nn.Module):
    def forward(self, x):
        return Fn.gelu(x)


class MLP(nn.Module):
    """Fully connected stack ``in -> hidden* -> out`` with GELU between layers."""

    def __init__(self, in_dim: int, hidden: list[int] | tuple[int, ...], out_dim: int):
        super().__init__()
        dims = [in_dim, *hidden, out_dim]
        self.layers = nn.ModuleList(nn.Linear(a, b) for a, b in zip(dims[:-1], dims[1:]))
        self.act = GELU()

    def forward(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = self.act(x)
        return x

    def zero_output(self) -> None:
        """Zero the final layer so the MLP emits exactly 0 for every input."""
        with torch.no_grad():
            self.layers[-1].weight.zero_()
            self.layers[-1].bias.zero_()


class GRU(nn.Module):
    """Single-layer GRU over (B, T, in) sequences, zero initial state."""

    def __init__(self, in_dim: int, hidden: int):
        super().__init__()
        self.hidden = hidden
        self.inp = nn.Linear(in_dim, 3 * hidden)
        self.rec = nn.Linear(hidden, 3 * hidden)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, _ = x.shape
        h = x.new_zeros(b, self.hidden)
        gx = self.inp(x)
        outs = []
        for step in range(t):
            xr, xz, xn = gx[:, step].chunk(3, dim=-1)
            hr, hz, hn = self.rec(h).chunk(3, dim=-1)
            r = torch.sigmoid(xr + hr)
            z = torch.sigmoid(xz + hz)
            n = torch.tanh(xn + r * hn)
            h = (1.0 - z) * n + z * h
            outs.append(h)
        return torch.stack(outs, dim=1)


class MultiHeadAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads:
            raise ValueError(f"embedding dim {dim} not divisible by {heads} heads")
        self.dim, self.heads = dim, heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def split(self, x):
        b, i, _ = x.shape
        q, k, v = self.qkv(x).view(b, i, 3, self.heads, self.dim // self.heads).permute(2, 0, 3, 1, 4)
        return q, k, v

    def forward(self, x):
        b, i, _ = x.shape
        q, k, v = self.split(x)
        out = Fn.attention(q, k, v)
        return self.proj(out.transpose(1, 2).reshape(b, i, self.dim))


class TransformerBlock(nn.Module):
    """Pre-norm block: ``x + MHA(LN(x))`` then ``+ FFN(LN(.))``."""

    def __init__(self, dim: int, heads: int, ffn_mult: int = 4):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = MLP(dim, [ffn_mult * dim], dim)

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.ffn(self.norm2(x))

    def zero_residual(self) -> None:
        with torch.no_grad():
            self.attn.proj.weight.zero_()
            self.attn.proj.bias.zero_()
        self.ffn.zero_output()


class Transformer(nn.Module):
    """Stack of ``depth`` blocks followed by a final LayerNorm; input (B, I, D)."""

    def __init__(self, dim: int, depth: int, heads: int, ffn_mult: int = 4):
        super().__init__()
        self.blocks = nn.ModuleList(TransformerBlock(dim, heads, ffn_mult) for _ in range(depth))
        self.norm = nn.LayerNorm(dim)

    def forward(self, x):
        for blk in self.blocks:
            x = blk(x)
        return self.norm(x)

    def zero_residual(self) -> None:
        for blk in self.blocks:
            blk.zero_residual()


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    """Truncated-normal linear/conv weights, zero biases, unit LayerNorm."""
    for m in module.modules():
        if isinstance(m, (nn.Linear, nn.Conv2d)):
            nn.init.trunc_normal_(m.weight, std=std, a=-2 * std, b=2 * std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.LayerNorm):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
