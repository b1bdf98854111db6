"""Context encoder, EMA target encoder and predictor over the shared token space."""

from __future__ import annotations

import copy

import numpy as np
import torch
from torch import nn

from ..nn import functional as Fn
from ..nn.layers import Transformer, init_weights
from ..tokenizer import MultimodalTokenizer, TokenLayout
from .masking import MaskSpec, future_mask


def _index(idx, batch: int) -> torch.Tensor:
    """(n,) or (B, n) index arrays -> (B, n) long tensor."""
    t = torch.as_tensor(np.asarray(idx), dtype=torch.long)
    if t.ndim == 1:
        t = t.unsqueeze(0).expand(batch, -1)
    return t


def gather_tokens(z: torch.Tensor, idx) -> torch.Tensor:
    i = _index(idx, z.shape[0])
    return torch.gather(z, 1, i.unsqueeze(-1).expand(-1, -1, z.shape[-1]))


class JepaModel(nn.Module):
    """Tokenizer and embedding tables are shared by the student and the teacher."""

    def __init__(self, dim: int, depth: int, heads: int, predictor_depth: int, n_frames: int, n_beams: int,
                 ffn_mult: int = 4, cnn_channels=(8, 16, 32)):
        super().__init__()
        self.dim = dim
        self.tokenizer = MultimodalTokenizer(dim, n_frames, n_beams, cnn_channels)
        self.context_encoder = Transformer(dim, depth, heads, ffn_mult)
        self.predictor = Transformer(dim, predictor_depth, heads, ffn_mult)
        init_weights(self.context_encoder)
        init_weights(self.predictor)
        self.mask_token = nn.Parameter(torch.zeros(dim))
        nn.init.trunc_normal_(self.mask_token, std=0.02, a=-0.04, b=0.04)
        self.target_encoder = copy.deepcopy(self.context_encoder)
        self.target_encoder.requires_grad_(False)

    @classmethod
    def from_config(cls, cfg) -> "JepaModel":
        m, s = cfg.model, cfg.scenario
        return cls(m.dim, m.depth, m.heads, m.predictor_depth, s.T, s.n_beams, m.ffn_mult, tuple(m.cnn_channels))

    def student_parameters(self) -> list[nn.Parameter]:
        """Everything AdamW updates: tokenizers, tables, context encoder, predictor, mask token."""
        skip = {id(p) for p in self.target_encoder.parameters()}
        return [p for p in self.parameters() if id(p) not in skip]

    def embed(self, batch: dict, layout: TokenLayout) -> torch.Tensor:
        return self.tokenizer.embed(batch, layout)

    def encode_context(self, z_keep: torch.Tensor) -> torch.Tensor:
        if z_keep.shape[1] < 1:
            raise ValueError("context encoder needs at least one visible token")
        return self.context_encoder(z_keep)

    def build_predictor_input(self, C: torch.Tensor, keep_idx, mask_idx, layout: TokenLayout) -> torch.Tensor:
        b, n_keep, d = C.shape
        keep = _index(keep_idx, b)
        mask = _index(mask_idx, b)
        if keep.shape[1] != n_keep:
            raise ValueError("context rows do not align with the visible index set")
        if keep.shape[1] + mask.shape[1] != layout.n_tokens:
            raise ValueError("visible and masked sets do not cover the sequence")
        slots = self.mask_token + self.tokenizer.positional(layout.coords)
        out = slots.unsqueeze(0).expand(b, -1, -1)
        return out.scatter(1, keep.unsqueeze(-1).expand(-1, -1, d), C)

    def predict_latents(self, c_pred: torch.Tensor) -> torch.Tensor:
        return self.predictor(c_pred)

    @torch.no_grad()
    def encode_target(self, z_full: torch.Tensor) -> torch.Tensor:
        return self.target_encoder(z_full)

    def predict_from_embedded(self, z: torch.Tensor, spec: MaskSpec | list[MaskSpec], layout: TokenLayout) -> torch.Tensor:
        """Full training-path prediction Û for already embedded tokens ``z`` (B, I, D)."""
        specs = spec if isinstance(spec, list) else [spec] * z.shape[0]
        keep = np.stack([s.keep_idx for s in specs])
        mask = np.stack([s.mask_idx for s in specs])
        C = self.encode_context(gather_tokens(z, keep))
        return self.predict_latents(self.build_predictor_input(C, keep, mask, layout))

    def jepa_loss(self, u_hat: torch.Tensor, u_star: torch.Tensor, mask_idx) -> torch.Tensor:
        """Mean element-wise smooth-l1 over masked positions (sum / (|mask| * D))."""
        if u_hat.shape != u_star.shape:
            raise ValueError("prediction and target shapes differ")
        m = _index(mask_idx, u_hat.shape[0])
        if m.shape[1] == 0:
            raise ValueError("empty mask set")
        return Fn.smooth_l1(gather_tokens(u_hat, m), gather_tokens(u_star, m))

    def training_loss(self, batch: dict, layout: TokenLayout, specs: list[MaskSpec]) -> torch.Tensor:
        z = self.embed(batch, layout)
        u_hat = self.predict_from_embedded(z, specs, layout)
        u_star = self.encode_target(z)
        return self.jepa_loss(u_hat, u_star, np.stack([s.mask_idx for s in specs]))

    @torch.no_grad()
    def ema_update(self, beta: float) -> None:
        if not 0.0 <= beta <= 1.0:
            raise ValueError(f"EMA momentum {beta} outside [0, 1]")
        for tgt, src in zip(self.target_encoder.parameters(), self.context_encoder.parameters()):
            if tgt.shape != src.shape:
                raise ValueError("teacher/student parameter shapes differ")
            # lerp is exact at both endpoints: weight 0 keeps the teacher, weight 1 copies the student
            tgt.lerp_(src, 1.0 - beta)

    def future_latents(self, batch: dict, t_hist: int, n_frames: int, drop=()) -> torch.Tensor:
        """Predicted tokens for every future slot, from history frames only: (B, I_fut, D)."""
        z_hist = self.embed(batch, TokenLayout.build(range(t_hist), drop))
        return self.future_from_embedded(z_hist, t_hist, n_frames, drop)

    def future_from_embedded(self, z_hist: torch.Tensor, t_hist: int, n_frames: int, drop=()) -> torch.Tensor:
        layout = TokenLayout.build(range(n_frames), drop)
        spec = future_mask(layout, t_hist)
        if z_hist.shape[1] != len(spec.keep_idx):
            raise ValueError("history tokens do not match the history layout")
        C = self.encode_context(z_hist)
        u_hat = self.predict_latents(self.build_predictor_input(C, spec.keep_idx, spec.mask_idx, layout))
        return u_hat[:, spec.mask_idx]


def pool_future(u_fut: torch.Tensor, layout_future: TokenLayout, pooling) -> torch.Tensor:
    """S_Pred: per future frame, the mean of predicted tokens whose modality is in ``pooling``."""
    rows = []
    for t in layout_future.frames:
        idx = layout_future.indices(frames=[t], modalities=[m for m in layout_future.modalities if m in pooling])
        if len(idx) == 0:
            raise ValueError("pooling set selects no tokens")
        rows.append(u_fut[:, idx].mean(dim=1))
    return torch.stack(rows, dim=1)


def backbone_features(model: JepaModel, batch: dict, t_hist: int, n_frames: int, drop=(), pooling=None,
                      z_hist: torch.Tensor | None = None) -> torch.Tensor:
    """S_Pred (B, T_pred, D); pass ``z_hist`` to start from already embedded history tokens."""
    if n_frames - t_hist < 1:
        raise ValueError("T_pred must be >= 1")
    if z_hist is None:
        u_fut = model.future_latents(batch, t_hist, n_frames, drop)
    else:
        u_fut = model.future_from_embedded(z_hist, t_hist, n_frames, drop)
    fut_layout = TokenLayout.build(range(t_hist, n_frames), drop)
    return pool_future(u_fut, fut_layout, pooling or fut_layout.modalities)
