"""Frozen-backbone task heads: coarse-plus-residual localization, location-guided beam
classification and beam-spectrum RSSI regression."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .checkpoint import load_module_records, parameter_hash, read_checkpoint, save_checkpoint
from .config import RunConfig
from .data import FrameStore
from .jepa.model import JepaModel, backbone_features
from .nn import functional as Fn
from .nn.layers import GRU, MLP
from .nn.optim import AdamW, cosine_lr
from .seeds import numpy_rng, resolve_seeds

log = logging.getLogger(__name__)


class BackboneChanged(RuntimeError):
    """The frozen backbone's parameters changed during head training."""


def coarse_history(p_hist: torch.Tensor, t_pred: int) -> torch.Tensor:
    """Constant-velocity extrapolation from the last two history positions: (B, T_pred, 2)."""
    if p_hist.shape[-2] < 2:
        raise ValueError("constant-velocity extrapolation needs at least 2 history positions")
    last, prev = p_hist[..., -1, :], p_hist[..., -2, :]
    steps = torch.arange(1, t_pred + 1, dtype=p_hist.dtype).reshape(-1, 1)
    return last.unsqueeze(-2) + steps * (last - prev).unsqueeze(-2)


class LocalizationHead(nn.Module):
    """Ŷ = Ỹ + ΔY with ΔY from a per-step residual MLP; Ỹ from history or a bootstrap MLP."""

    def __init__(self, dim: int, t_pred: int, hidden: int | None = None, pos_scale: float = 25.0):
        super().__init__()
        hidden = hidden or dim
        self.t_pred, self.pos_scale = t_pred, pos_scale
        self.residual = MLP(dim, [hidden, hidden], 2)
        self.bootstrap = MLP(dim, [hidden], 2)

    def coarse(self, s_pred: torch.Tensor, p_hist: torch.Tensor | None) -> torch.Tensor:
        if p_hist is not None:
            return coarse_history(p_hist.double(), self.t_pred)
        anchor = self.pos_scale * self.bootstrap(s_pred[:, -1]).double()
        return anchor.unsqueeze(1).expand(-1, self.t_pred, -1)

    def forward(self, s_pred: torch.Tensor, p_hist: torch.Tensor | None = None) -> torch.Tensor:
        return self.coarse(s_pred, p_hist) + self.residual(s_pred).double()

    def zero_residual(self) -> None:
        self.residual.zero_output()


def localization_loss(y_hat: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
    """Mean over steps of the per-step l1 norm."""
    return (y_hat - truth).abs().sum(dim=-1).mean()


def fuse_location(s_pred: torch.Tensor, y_loc: torch.Tensor | None, enabled: bool = True) -> torch.Tensor:
    """[S_Pred ; Ŷ_Loc] row-wise (float64 so the location columns are carried exactly)."""
    if not enabled or y_loc is None:
        return s_pred
    if s_pred.shape[:-1] != y_loc.shape[:-1]:
        raise ValueError("S_Pred and Ŷ_Loc row counts differ")
    return torch.cat([s_pred.double(), y_loc.double()], dim=-1)


class BeamHead(nn.Module):
    """Projection -> single-layer GRU over future steps -> decoder MLP to K logits."""

    def __init__(self, in_dim: int, n_beams: int, hidden: int, loc_cols: bool, pos_scale: float = 25.0):
        super().__init__()
        self.loc_cols, self.pos_scale = loc_cols, pos_scale
        self.proj = nn.Linear(in_dim, hidden)
        self.gru = GRU(hidden, hidden)
        self.decoder = MLP(hidden, [hidden], n_beams)

    def forward(self, s_fused: torch.Tensor) -> torch.Tensor:
        x = s_fused
        if self.loc_cols:
            x = torch.cat([x[..., :-2], x[..., -2:] / self.pos_scale], dim=-1)
        return self.decoder(self.gru(self.proj(x.to(self.proj.weight.dtype))))


def beam_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    return Fn.cross_entropy_index(logits.reshape(-1, logits.shape[-1]), labels.reshape(-1))


class RssiHead(nn.Module):
    """Spectrum = coarse (RF persistence or bootstrap) + residual MLP on S_Fused."""

    def __init__(self, in_dim: int, dim: int, n_beams: int, hidden: int, t_pred: int, loc_cols: bool,
                 pos_scale: float = 25.0):
        super().__init__()
        self.t_pred, self.loc_cols, self.pos_scale = t_pred, loc_cols, pos_scale
        self.residual = MLP(in_dim, [hidden, hidden], n_beams)
        self.bootstrap = MLP(dim, [hidden], n_beams)

    def coarse(self, s_pred: torch.Tensor, rf_last: torch.Tensor | None) -> torch.Tensor:
        base = rf_last.double() if rf_last is not None else self.bootstrap(s_pred[:, -1]).double()
        return base.unsqueeze(1).expand(-1, self.t_pred, -1)

    def forward(self, s_fused: torch.Tensor, s_pred: torch.Tensor, rf_last: torch.Tensor | None = None):
        x = s_fused
        if self.loc_cols:
            x = torch.cat([x[..., :-2], x[..., -2:] / self.pos_scale], dim=-1)
        power = self.coarse(s_pred, rf_last) + self.residual(x.to(self.residual.layers[0].weight.dtype)).double()
        return power, power.mean(dim=-1)

    def zero_residual(self) -> None:
        self.residual.zero_output()


def rssi_loss(power: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return Fn.smooth_l1(power, target.to(power.dtype))


class TaskHeads(nn.Module):
    def __init__(self, dim: int, n_beams: int, t_pred: int, hidden: int, loc_aux: bool, pos_scale: float):
        super().__init__()
        self.loc_aux = loc_aux
        fused = dim + 2 if loc_aux else dim
        self.localization = LocalizationHead(dim, t_pred, dim, pos_scale)
        self.beam = BeamHead(fused, n_beams, hidden, loc_aux, pos_scale)
        self.rssi = RssiHead(fused, dim, n_beams, hidden, t_pred, loc_aux, pos_scale)

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "TaskHeads":
        s = cfg.scenario
        return cls(cfg.model.dim, s.n_beams, s.t_pred, cfg.model.head_hidden, cfg.heads.loc_aux, cfg.preprocess.pos_scale)

    def forward(self, f: "Features"):
        y_loc = self.localization(f.s_pred, f.p_hist)
        fused = fuse_location(f.s_pred, y_loc, self.loc_aux)
        logits = self.beam(fused)
        power, rssi = self.rssi(fused, f.s_pred, f.rf_last)
        return {"loc": y_loc, "logits": logits, "power": power, "rssi": rssi}


@dataclass
class Features:
    """Cached frozen-backbone outputs plus the coarse-branch inputs for a set of windows."""

    s_pred: torch.Tensor  # (N, T_pred, D)
    p_hist: torch.Tensor | None  # (N, T_hist, 2) float64, None when GPS is dropped
    rf_last: torch.Tensor | None  # (N, K) normalised, None when RF is dropped

    def subset(self, idx) -> "Features":
        idx = torch.as_tensor(np.asarray(idx), dtype=torch.long)
        return Features(self.s_pred[idx], None if self.p_hist is None else self.p_hist[idx],
                        None if self.rf_last is None else self.rf_last[idx])


@torch.no_grad()
def compute_features(model: JepaModel, store: FrameStore, ids, cfg: RunConfig, batch_size: int = 16) -> Features:
    s, h = cfg.scenario, cfg.heads
    rows = []
    for b in range(0, len(ids), batch_size):
        chunk = ids[b : b + batch_size]
        batch = store.inputs(chunk, frames=range(s.t_hist))
        rows.append(backbone_features(model, batch, s.t_hist, s.T, h.drop, h.pooling))
    s_pred = torch.cat(rows) if rows else torch.zeros(0, s.t_pred, cfg.model.dim)
    lab = store.labels(ids)
    p_hist = None if "gps" in h.drop else torch.from_numpy(lab["p"][:, : s.t_hist])
    rf_last = None if "rf" in h.drop else torch.from_numpy(lab["rf_norm"][:, s.t_hist - 1])
    return Features(s_pred, p_hist, rf_last)


def head_targets(store: FrameStore, ids, cfg: RunConfig) -> dict[str, torch.Tensor]:
    lab = store.labels(ids)
    fut = slice(cfg.scenario.t_hist, cfg.scenario.T)
    return {
        "p": torch.from_numpy(lab["p_true"][:, fut]),
        "beam": torch.from_numpy(lab["best_beam"][:, fut]),
        "rf": torch.from_numpy(lab["rf_norm"][:, fut]),
    }


def _train_stage(name, params, loss_fn, n, cfg: RunConfig, seed: int, curve: list) -> None:
    h = cfg.heads
    opt = AdamW(params, h.lr, h.weight_decay)
    per_epoch = math.ceil(n / h.batch_size)
    total = h.epochs * per_epoch
    step = 0
    for epoch in range(1, h.epochs + 1):
        order = numpy_rng(seed, epoch).permutation(n)
        losses = []
        for b in range(per_epoch):
            idx = order[b * h.batch_size : (b + 1) * h.batch_size]
            opt.state.lr = cosine_lr(step, total, h.lr)
            loss = loss_fn(idx)
            if not torch.isfinite(loss):
                raise Fn.NumericalError(f"non-finite {name} loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
            step += 1
        curve.append((name, epoch, float(np.mean(losses))))
        log.info("%s epoch %d/%d loss %.5f", name, epoch, h.epochs, curve[-1][2])


def train_heads(cfg: RunConfig, model: JepaModel, store: FrameStore, seeds: dict | None = None):
    """Localization first, then beam and RSSI on the frozen localization output.

    Returns ``(heads, curve, backbone_hash)``; curve rows are ``(head, epoch, mean_loss)``.
    """
    seeds = seeds or resolve_seeds(cfg.seed)
    model.requires_grad_(False)
    before = parameter_hash(model)
    train_ids = store.ids("train")
    if len(train_ids) == 0:
        raise ValueError("head training needs a non-empty training split")
    feats = compute_features(model, store, train_ids, cfg)
    tgt = head_targets(store, train_ids, cfg)
    torch.manual_seed(seeds["heads"])
    heads = TaskHeads.from_config(cfg)
    curve: list = []
    n = len(train_ids)

    loc = heads.localization

    def loc_step(idx):
        f = feats.subset(idx)
        return localization_loss(loc(f.s_pred, f.p_hist), tgt["p"][idx])

    _train_stage("localization", loc.parameters(), loc_step, n, cfg, seeds["heads"] ^ 1, curve)
    loc.requires_grad_(False)
    with torch.no_grad():
        y_loc = loc(feats.s_pred, feats.p_hist)
    fused = fuse_location(feats.s_pred, y_loc, heads.loc_aux)

    def beam_step(idx):
        return beam_loss(heads.beam(fused[idx]), tgt["beam"][idx])

    def rssi_step(idx):
        f = feats.subset(idx)
        power, _ = heads.rssi(fused[idx], f.s_pred, f.rf_last)
        return rssi_loss(power, tgt["rf"][idx])

    _train_stage("beam", heads.beam.parameters(), beam_step, n, cfg, seeds["heads"] ^ 2, curve)
    _train_stage("rssi", heads.rssi.parameters(), rssi_step, n, cfg, seeds["heads"] ^ 3, curve)
    heads.requires_grad_(False)

    after = parameter_hash(model)
    if after != before:
        raise BackboneChanged("backbone parameter hash changed during head training")
    return heads, curve, before


def save_heads(out_dir, cfg: RunConfig, heads: TaskHeads, backbone_hash: str) -> list[Path]:
    out = Path(out_dir)
    paths = []
    for name in ("localization", "beam", "rssi"):
        module = getattr(heads, name)
        paths.append(save_checkpoint(out / f"head_{name}.jmsc", f"head:{name}", cfg, {name: module},
                                     meta={"backbone_hash": backbone_hash}))
    return paths


def load_heads(out_dir, cfg: RunConfig) -> tuple[TaskHeads, str]:
    heads = TaskHeads.from_config(cfg)
    bb_hash = None
    for name in ("localization", "beam", "rssi"):
        rec, info, _ = read_checkpoint(Path(out_dir) / f"head_{name}.jmsc")
        load_module_records(getattr(heads, name), rec, name)
        bb_hash = info.get("backbone_hash")
    heads.requires_grad_(False)
    return heads, bb_hash
