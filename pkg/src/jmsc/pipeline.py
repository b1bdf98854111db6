"""Stage drivers shared by the CLI: generate, pretrain, train-heads, evaluate, ablate."""

from __future__ import annotations

import logging
import shutil
from pathlib import Path

from . import plotting
from .checkpoint import parameter_hash
from .config import ConfigError, RunConfig
from .data import FrameStore
from .evaluate import evaluate, write_eval
from .heads import load_heads, save_heads, train_heads
from .jepa.pretrain import build_model, load_backbone, pretrain, save_backbone
from .provenance import write_csv
from .seeds import resolve_seeds
from .sim.dataset import generate_dataset

log = logging.getLogger(__name__)

HEAD_CURVE_HEADER = "head,epoch,mean_loss"
ABLATION_HEADER = "setting,r_rankme,r_lda,ade,fde,acc1,acc3,l1diff,rmse,mae"
BACKBONE_SECTIONS = ("scenario", "preprocess", "model")


def run_generate(cfg: RunConfig, out) -> dict:
    return generate_dataset(cfg, out)


def run_pretrain(cfg: RunConfig, data, out) -> Path:
    store = FrameStore.load(data, cfg)
    result = pretrain(cfg, store, out)
    plotting.pretrain_curve(result.curve, Path(out) / "pretrain_loss.png")
    return result.checkpoint


def _merge_backbone_config(cfg: RunConfig, bb_cfg: RunConfig) -> RunConfig:
    """Head/eval settings come from ``cfg``; the backbone's own sections must agree with it."""
    for sec in BACKBONE_SECTIONS:
        if getattr(cfg, sec) != getattr(bb_cfg, sec):
            raise ConfigError(f"config section '{sec}' differs from the one the backbone was trained with")
    return cfg.replace(pretrain=bb_cfg.to_dict()["pretrain"])


def run_train_heads(cfg: RunConfig, data, checkpoint, out) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = resolve_seeds(cfg.seed)
    if cfg.heads.untrained_backbone:
        store = FrameStore.load(data, cfg)
        model = build_model(cfg, seeds["init"])
        bb_path = save_backbone(out / "backbone_untrained.jmsc", cfg, model, store.stats, meta={"untrained": True})
        log.info("untrained backbone written to %s", bb_path)
    else:
        if checkpoint is None:
            raise FileNotFoundError("train-heads needs a backbone checkpoint (--checkpoint)")
        model, bb_cfg, stats, _ = load_backbone(checkpoint)
        cfg = _merge_backbone_config(cfg, bb_cfg)
        store = FrameStore.load(data, cfg, stats)
    heads, curve, bb_hash = train_heads(cfg, model, store, seeds)
    write_csv(out / "heads_loss.csv", HEAD_CURVE_HEADER, curve, cfg.hash())
    plotting.head_curves(curve, out / "heads_loss.png")
    return save_heads(out, cfg, heads, bb_hash)


def run_evaluate(cfg: RunConfig, data, checkpoint, heads_dir, out) -> dict:
    if checkpoint is None:
        raise FileNotFoundError("evaluate needs a backbone checkpoint (--checkpoint)")
    model, bb_cfg, stats, info = load_backbone(checkpoint)
    cfg = _merge_backbone_config(cfg, bb_cfg)
    if info.get("untrained"):
        cfg = cfg.replace(heads__untrained_backbone=True)
    heads_dir = Path(heads_dir) if heads_dir is not None else Path(checkpoint).parent
    heads, bb_hash = load_heads(heads_dir, cfg)
    if bb_hash is not None and bb_hash != parameter_hash(model):
        raise ConfigError(f"heads in {heads_dir} were trained on a different backbone than {checkpoint}")
    store = FrameStore.load(data, cfg, stats)
    result = evaluate(cfg, model, heads, store)
    result.report["seeds"] = resolve_seeds(cfg.seed)
    paths = write_eval(out, result, cfg.hash())
    out = Path(out)
    plotting.horizon_panels(result.horizon, out / "horizon.png")
    plotting.error_cdf(result.cdf, out / "ade_cdf.png")
    plotting.mismatch_histogram(result.report["mismatch_hist"], out / "mismatch_hist.png")
    return {"report": result.report, "paths": paths}


def ablation_cells(cfg: RunConfig) -> list[tuple[str, RunConfig, bool]]:
    """``(label, config, needs_pretraining)`` in output order."""
    a, base = cfg.ablation, cfg
    cells = []
    for pattern in a.mask_patterns:
        c = base.replace(pretrain__mask_pattern=pattern)
        cells.append((f"mask={pattern} rho={c.pretrain.mask_ratio}", c, not _is_base(c, base)))
    for rho in a.mask_ratios:
        if rho == base.pretrain.mask_ratio:
            continue  # shared with the pattern sweep
        c = base.replace(pretrain__mask_ratio=rho)
        cells.append((f"mask={c.pretrain.mask_pattern} rho={rho}", c, True))
    for dim in a.dims:
        if dim != base.model.dim:
            cells.append((f"dim={dim}", base.replace(model__dim=dim), True))
    for drop in a.drop_sets:
        cells.append(("w/o " + "+".join(drop), base.replace(heads__drop=list(drop)), False))
    if a.loc_aux_off:
        cells.append(("w/o loc aux", base.replace(heads__loc_aux=False), False))
    if a.untrained:
        cells.append(("untrained backbone", base.replace(heads__untrained_backbone=True), False))
    return cells


def _is_base(c: RunConfig, base: RunConfig) -> bool:
    return c.pretrain == base.pretrain and c.model == base.model


def run_ablate(cfg: RunConfig, data, out, checkpoint=None) -> list[tuple]:
    """Every cell works on its own copy of any shared backbone checkpoint."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    base_ckpt = Path(checkpoint) if checkpoint is not None else None
    rows = []
    for i, (label, c, needs_pretrain) in enumerate(ablation_cells(cfg)):
        cell = out / f"cell{i:02d}"
        cell.mkdir(parents=True, exist_ok=True)
        log.info("ablation cell %d: %s", i, label)
        if c.heads.untrained_backbone:
            run_train_heads(c, data, None, cell)
            ckpt = cell / "backbone_untrained.jmsc"
        else:
            if needs_pretrain:
                ckpt = run_pretrain(c, data, cell)
            else:
                if base_ckpt is None:
                    base_ckpt = run_pretrain(c, data, out / "base")
                ckpt = cell / "backbone.jmsc"
                shutil.copyfile(base_ckpt, ckpt)
            run_train_heads(c, data, ckpt, cell)
        r = run_evaluate(c, data, ckpt, cell, cell / "eval")["report"]
        rows.append((label, r["r_rankme"], r["r_lda"], r["ade"], r["fde"], r["acc1"], r["acc3"],
                     r["mean_l1_rsrp_diff"], r["rmse"], r["mae"]))
        write_csv(out / "ablation.csv", ABLATION_HEADER, rows, cfg.hash())
    return rows
