"""Test-split evaluation: representation ranks, PHY metrics, per-horizon tables and dumps."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import container
from .config import RunConfig
from .data import FrameStore
from .heads import TaskHeads, compute_features
from .jepa.model import JepaModel, backbone_features
from .metrics import (
    ade_fde,
    displacement,
    l1_rsrp_diff,
    lda_rank,
    make_augmented_views,
    rankme,
    rmse_mae,
    top1_beam,
    topn_accuracy,
)
from .provenance import stamp, write_csv
from .seeds import numpy_rng, resolve_seeds
from .tokenizer import TokenLayout

REPORT_KEYS = ("r_rankme", "r_lda", "ade", "fde", "acc1", "acc3", "mean_l1_rsrp_diff", "mismatch_hist", "rmse", "mae",
               "n_samples")
HORIZON_HEADER = "step,mean_d_loc,acc1,acc3,mean_l1_rsrp_diff,rmse,mae"
CDF_HEADER = "d_loc,cdf"


@dataclass
class EvalResult:
    report: dict
    horizon: list[tuple]
    cdf: np.ndarray  # (M, 2) sorted errors and cumulative fraction
    dump: dict[str, np.ndarray]


@torch.no_grad()
def augmented_representations(model: JepaModel, store: FrameStore, ids, cfg: RunConfig, rng, batch_size: int = 16) -> np.ndarray:
    """(N, A, D): each view is a jittered copy of the embedded history, pooled over future steps."""
    s, h, e = cfg.scenario, cfg.heads, cfg.eval
    hist = TokenLayout.build(range(s.t_hist), h.drop)
    out = []
    for b in range(0, len(ids), batch_size):
        batch = store.inputs(ids[b : b + batch_size], frames=range(s.t_hist))
        z_hist = model.embed(batch, hist)
        views = [backbone_features(model, None, s.t_hist, s.T, h.drop, h.pooling, z_hist=v).mean(dim=1)
                 for v in make_augmented_views(z_hist, e.n_aug, e.aug_sigma, rng)]
        out.append(torch.stack(views, dim=1).double().numpy())
    return np.concatenate(out)


@torch.no_grad()
def predict(cfg: RunConfig, model: JepaModel, heads: TaskHeads, store: FrameStore, ids) -> tuple[dict, np.ndarray]:
    feats = compute_features(model, store, ids, cfg)
    out = heads(feats)
    return {k: v.double().numpy() for k, v in out.items()}, feats.s_pred.double().numpy()


def evaluate(cfg: RunConfig, model: JepaModel, heads: TaskHeads, store: FrameStore, seeds: dict | None = None) -> EvalResult:
    seeds = seeds or resolve_seeds(cfg.seed)
    s = cfg.scenario
    model.requires_grad_(False)
    ids = store.ids("test")
    if len(ids) < 2:
        raise ValueError("evaluation needs at least 2 test windows")
    pred, s_pred = predict(cfg, model, heads, store, ids)
    lab = store.labels(ids)
    fut = slice(s.t_hist, s.T)
    p_true = lab["p_true"][:, fut]
    k_star = lab["best_beam"][:, fut]
    spectra = lab["spectrum_db"][:, fut]
    y_rssi = lab["spectrum_norm"][:, fut].mean(axis=-1)

    k_hat = top1_beam(pred["logits"])
    ade, fde = ade_fde(pred["loc"], p_true)
    dp, hist = l1_rsrp_diff(k_hat, k_star, spectra)
    rmse, mae = rmse_mae(pred["rssi"], y_rssi)
    r_me = rankme(s_pred.mean(axis=1))
    r_lda = lda_rank(augmented_representations(model, store, ids, cfg, numpy_rng(seeds["eval"])))

    report = {
        "r_rankme": r_me.value,
        "r_lda": r_lda.value,
        "ade": ade,
        "fde": fde,
        "acc1": topn_accuracy(pred["logits"], k_star, 1),
        "acc3": topn_accuracy(pred["logits"], k_star, 3),
        "mean_l1_rsrp_diff": float(dp.mean()),
        "mismatch_hist": [int(c) for c in hist],
        "rmse": rmse,
        "mae": mae,
        "n_samples": {"windows": int(len(ids)), "steps": int(k_star.size), "views": int(cfg.eval.n_aug)},
        **stamp(cfg.hash()),
        "flags": {
            "rankme_degenerate": r_me.degenerate,
            "lda_degenerate": r_lda.degenerate,
            "lda_augmentation": f"token-space gaussian jitter, sigma={cfg.eval.aug_sigma}",
            "loc_aux": cfg.heads.loc_aux,
            "untrained_backbone": cfg.heads.untrained_backbone,
            "drop": list(cfg.heads.drop),
            "pooling": list(cfg.heads.pooling),
        },
    }
    d = displacement(pred["loc"], p_true)
    horizon = []
    for t in range(s.t_pred):
        rm, ma = rmse_mae(pred["rssi"][:, t], y_rssi[:, t])
        horizon.append((t + 1, float(d[:, t].mean()), topn_accuracy(pred["logits"][:, t], k_star[:, t], 1),
                        topn_accuracy(pred["logits"][:, t], k_star[:, t], 3), float(dp[:, t].mean()), rm, ma))
    errs = np.sort(d.ravel())
    cdf = np.stack([errs, np.arange(1, len(errs) + 1) / len(errs)], axis=1)
    dump = {
        "loc": pred["loc"], "p_true": p_true, "logits": pred["logits"], "best_beam": k_star.astype(np.float64),
        "spectrum_db": spectra, "rssi": pred["rssi"], "y_rssi": y_rssi, "power": pred["power"],
    }
    return EvalResult(report, horizon, cdf, dump)


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def write_eval(out_dir, result: EvalResult, config_hash: str) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": out / "report.json", "horizon": out / "horizon.csv", "cdf": out / "ade_cdf.csv",
             "dump": out / "predictions.jmsc"}
    paths["report"].write_text(report_json(result.report))
    write_csv(paths["horizon"], HORIZON_HEADER, result.horizon, config_hash)
    write_csv(paths["cdf"], CDF_HEADER, result.cdf.tolist(), config_hash)
    container.save(paths["dump"], result.dump)
    return paths
