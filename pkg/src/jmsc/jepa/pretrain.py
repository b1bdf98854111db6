"""JEPA pretraining loop with cosine LR, linear EMA momentum and per-epoch checkpoints."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..checkpoint import load_module_records, read_checkpoint, save_checkpoint
from ..config import RunConfig, from_dict
from ..container import ContainerError
from ..data import FrameStore, NormStats
from ..nn.functional import NumericalError
from ..nn.optim import AdamW, cosine_lr, linear_momentum
from ..provenance import write_csv
from ..seeds import numpy_rng, resolve_seeds
from ..tokenizer import TokenLayout
from .masking import sample_mask
from .model import JepaModel

log = logging.getLogger(__name__)

CURVE_HEADER = "epoch,mean_loss,lr,beta"


@dataclass
class PretrainResult:
    checkpoint: Path
    curve: list[tuple[int, float, float, float]] = field(default_factory=list)


def build_model(cfg: RunConfig, init_seed: int) -> JepaModel:
    torch.manual_seed(init_seed)
    return JepaModel.from_config(cfg)


def save_backbone(path, cfg: RunConfig, model: JepaModel, stats: NormStats, opt: AdamW | None = None,
                  meta: dict | None = None) -> Path:
    extra = {"meta/norm": stats.to_array()}
    if opt is not None:
        extra.update({f"optim/{k}": v for k, v in opt.state_tensors().items()})
    return save_checkpoint(path, "backbone", cfg, {"model": model}, extra, meta)


def load_backbone(path) -> tuple[JepaModel, RunConfig, NormStats, dict]:
    rec, info, cfg_dict = read_checkpoint(path)
    if info.get("kind") != "backbone":
        raise ContainerError(f"{path} is not a backbone checkpoint")
    cfg = from_dict(cfg_dict)
    model = JepaModel.from_config(cfg)
    load_module_records(model, rec, "model")
    return model, cfg, NormStats.from_array(rec["meta/norm"]), info


def pretrain(cfg: RunConfig, store: FrameStore, out_dir, seeds: dict | None = None) -> PretrainResult:
    seeds = seeds or resolve_seeds(cfg.seed)
    pt, T = cfg.pretrain, cfg.scenario.T
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "backbone.jmsc"
    curve_path = out / "pretrain_loss.csv"

    train_ids = store.ids("train")
    if len(train_ids) == 0:
        raise ValueError("pretraining needs a non-empty training split")
    model = build_model(cfg, seeds["init"])
    opt = AdamW(model.student_parameters(), pt.lr, pt.weight_decay, pt.betas, pt.eps)
    layout = TokenLayout.build(range(T), pt.drop)

    per_epoch = math.ceil(len(train_ids) / pt.batch_size)
    total = pt.epochs * per_epoch
    seed = seeds["pretrain"]
    step, curve = 0, []
    lr = beta = float("nan")
    for epoch in range(1, pt.epochs + 1):
        t0 = time.perf_counter()
        order = numpy_rng(seed, 0, epoch).permutation(train_ids)
        losses = []
        for b in range(per_epoch):
            ids = order[b * pt.batch_size : (b + 1) * pt.batch_size]
            rng = numpy_rng(seed, 1, step)
            specs = [sample_mask(layout, pt.mask_ratio, rng, pt.mask_pattern) for _ in ids]
            lr = cosine_lr(step, total, pt.lr)
            opt.state.lr = lr
            loss = model.training_loss(store.inputs(ids), layout, specs)
            if not torch.isfinite(loss):
                raise NumericalError(f"non-finite pretraining loss at epoch {epoch} step {step}; last good checkpoint kept at {ckpt}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            beta = linear_momentum(step, total, *pt.ema)
            model.ema_update(beta)
            losses.append(loss.item())
            step += 1
        curve.append((epoch, float(np.mean(losses)), lr, beta))
        save_backbone(ckpt, cfg, model, store.stats, opt, {"epoch": epoch, "steps": step})
        write_csv(curve_path, CURVE_HEADER, curve, cfg.hash())
        log.info("epoch %d/%d loss %.5f lr %.2e beta %.5f (%.1fs)", epoch, pt.epochs, curve[-1][1], lr, beta,
                 time.perf_counter() - t0)
    return PretrainResult(ckpt, curve)
