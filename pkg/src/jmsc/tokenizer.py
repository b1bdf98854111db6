"""Modality tokenizers, canonical token layout and factorized positional embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .config import MODALITIES
from .nn.layers import GELU

TOKEN_COUNTS = {"image": 9, "radar": 16, "lidar": 16, "gps": 1, "rf": 1}
MODALITY_ID = {m: i for i, m in enumerate(MODALITIES)}


@dataclass(frozen=True)
class TokenLayout:
    """Canonical ordering of tokens: frame-major, then modality, then intra-frame index.

    ``coords`` is an (I, 3) int array of (modality id, frame index, intra-frame index),
    frames 0-based.
    """

    frames: tuple[int, ...]
    modalities: tuple[str, ...]
    coords: np.ndarray

    @classmethod
    def build(cls, frames, drop=()) -> "TokenLayout":
        frames = tuple(int(f) for f in frames)
        unknown = set(drop) - set(MODALITIES)
        if unknown:
            raise ValueError(f"unknown modalities in drop set: {sorted(unknown)}")
        mods = tuple(m for m in MODALITIES if m not in set(drop))
        rows = [(MODALITY_ID[m], t, p) for t in frames for m in mods for p in range(TOKEN_COUNTS[m])]
        return cls(frames, mods, np.array(rows, dtype=np.int64).reshape(-1, 3))

    @property
    def n_tokens(self) -> int:
        return len(self.coords)

    @property
    def tokens_per_frame(self) -> int:
        return sum(TOKEN_COUNTS[m] for m in self.modalities)

    def indices(self, frames=None, modalities=None) -> np.ndarray:
        sel = np.ones(self.n_tokens, dtype=bool)
        if frames is not None:
            sel &= np.isin(self.coords[:, 1], list(frames))
        if modalities is not None:
            sel &= np.isin(self.coords[:, 0], [MODALITY_ID[m] for m in modalities])
        return np.flatnonzero(sel)


def _conv_stack(in_ch: int, channels, bias: bool, activation: bool) -> nn.Sequential:
    c0, c1, c2 = channels
    act = GELU if activation else nn.Identity
    return nn.Sequential(
        nn.Conv2d(in_ch, c0, 3, stride=2, bias=bias),
        act(),
        nn.AvgPool2d(2),
        nn.Conv2d(c0, c1, 3, bias=bias),
        act(),
        nn.AvgPool2d(2),
        nn.Conv2d(c1, c2, 3, bias=bias),
        act(),
    )


class GridTokenizer(nn.Module):
    """CNN -> adaptive average pool to ``grid x grid`` -> 1x1 projection to D -> tokens.

    Convolutions use valid padding, so a spatially constant input yields identical
    tokens.
    """

    def __init__(self, in_ch: int, dim: int, grid: int, channels=(8, 16, 32), bias: bool = True, activation: bool = True):
        super().__init__()
        self.in_ch, self.grid = in_ch, grid
        self.features = _conv_stack(in_ch, channels, bias, activation)
        self.pool = nn.AdaptiveAvgPool2d(grid)
        self.proj = nn.Conv2d(channels[2], dim, 1, bias=bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ValueError(f"expected (N, {self.in_ch}, H, W) input, got {tuple(x.shape)}")
        z = self.proj(self.pool(self.features(x)))
        return z.flatten(2).transpose(1, 2)

    def layer_shapes(self) -> list[tuple[int, ...]]:
        return [tuple(p.shape) for p in self.parameters()]


def vision_tokenizer(dim: int, channels=(8, 16, 32), **kw) -> GridTokenizer:
    return GridTokenizer(3, dim, 3, channels, **kw)


def spatial_tokenizer(dim: int, channels=(8, 16, 32), **kw) -> GridTokenizer:
    return GridTokenizer(1, dim, 4, channels, **kw)


class StateTokenizer(nn.Module):
    """Linear projection to D followed by LayerNorm: one token per frame."""

    def __init__(self, in_dim: int, dim: int):
        super().__init__()
        self.in_dim = in_dim
        self.proj = nn.Linear(in_dim, dim)
        self.norm = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"state vector length {x.shape[-1]} != {self.in_dim}")
        return self.norm(self.proj(x)).unsqueeze(-2)


class MultimodalTokenizer(nn.Module):
    """All five tokenizers plus the learnable time / modality / position tables."""

    def __init__(self, dim: int, n_frames: int, n_beams: int, channels=(8, 16, 32)):
        super().__init__()
        self.dim = dim
        self.image = vision_tokenizer(dim, channels)
        self.radar = spatial_tokenizer(dim, channels)
        self.lidar = spatial_tokenizer(dim, channels)
        self.gps = StateTokenizer(2, dim)
        self.rf = StateTokenizer(n_beams, dim)
        self.E_t = nn.Parameter(torch.zeros(n_frames, dim))
        self.E_m = nn.Parameter(torch.zeros(len(MODALITIES), dim))
        self.E_p = nn.Parameter(torch.zeros(max(TOKEN_COUNTS.values()), dim))
        for table in (self.E_t, self.E_m, self.E_p):
            nn.init.trunc_normal_(table, std=0.02, a=-0.04, b=0.04)

    def tokenize_modality(self, name: str, x: torch.Tensor) -> torch.Tensor:
        """(B, ...) raw per-frame input -> (B, P_m, D)."""
        if name in ("radar", "lidar") and x.ndim == 3:
            x = x.unsqueeze(1)
        return getattr(self, name)(x)

    def tokenize(self, batch: dict, layout: TokenLayout) -> torch.Tensor:
        """Tokens in canonical order, before positional embedding: (B, I, D).

        Every frame is tokenized separately with batch size B, so a frame's tokens
        do not depend on which other frames are in the window.
        """
        parts = []
        for t in layout.frames:
            for m in layout.modalities:
                parts.append(self.tokenize_modality(m, batch[m][:, t]))
        return torch.cat(parts, dim=1)

    def positional(self, coords: np.ndarray) -> torch.Tensor:
        c = torch.as_tensor(coords, dtype=torch.long)
        if len(c) and (
            int(c[:, 1].max()) >= self.E_t.shape[0] or int(c[:, 2].max()) >= self.E_p.shape[0] or int(c.min()) < 0
        ):
            raise IndexError("token coordinate outside embedding table extents")
        return self.E_t[c[:, 1]] + self.E_m[c[:, 0]] + self.E_p[c[:, 2]]

    def apply_pe(self, tokens: torch.Tensor, coords: np.ndarray) -> torch.Tensor:
        return tokens + self.positional(coords)

    def embed(self, batch: dict, layout: TokenLayout) -> torch.Tensor:
        return self.apply_pe(self.tokenize(batch, layout), layout.coords)
