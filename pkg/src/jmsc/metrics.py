"""Label-free representation metrics and downstream PHY metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

LDA_RIDGE = 1e-6


@dataclass(frozen=True)
class RankEstimate:
    value: float
    degenerate: bool = False


def entropy_rank(weights) -> RankEstimate:
    """exp of the Shannon entropy of ``weights / sum(weights)``; 0 log 0 = 0."""
    w = np.clip(np.asarray(weights, dtype=np.float64), 0.0, None)
    total = w.sum()
    if not total > 0:
        return RankEstimate(1.0, True)
    p = w[w > 0] / total
    return RankEstimate(float(np.exp(-np.sum(p * np.log(p)))))


def rankme(S) -> RankEstimate:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] < 2:
        raise ValueError("rankme needs an (N>=2, D) matrix")
    if not np.isfinite(S).all():
        raise ValueError("non-finite representations")
    return entropy_rank(np.linalg.svd(S, compute_uv=False))


def _inv_sqrt_psd(a: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh(a)
    return (vec / np.sqrt(lam)) @ vec.T


def lda_rank(views, ridge: float = LDA_RIDGE) -> RankEstimate:
    """``views``: (N, A, D) augmented representations."""
    v = np.asarray(views, dtype=np.float64)
    if v.ndim != 3 or v.shape[1] < 2:
        raise ValueError("lda_rank needs (N, A>=2, D) views")
    n, a, d = v.shape
    mu = v.mean(axis=1)
    dev = (v - mu[:, None, :]).reshape(-1, d)
    sigma_w = dev.T @ dev / (n * a)
    cen = mu - mu.mean(axis=0)
    sigma_b = cen.T @ cen / n
    w = _inv_sqrt_psd(sigma_w + ridge * np.eye(d))
    m = w @ sigma_b @ w
    lam = np.clip(np.linalg.eigvalsh(0.5 * (m + m.T)), 0.0, None)
    return entropy_rank(lam)


def make_augmented_views(z: torch.Tensor, n_views: int, sigma: float, rng: np.random.Generator) -> list[torch.Tensor]:
    """Independent Gaussian jitters of embedded tokens, std ``sigma`` in token units."""
    if n_views < 2:
        raise ValueError("need at least 2 augmented views")
    out = []
    for _ in range(n_views):
        noise = torch.from_numpy(rng.standard_normal(tuple(z.shape)).astype(np.float32))
        out.append(z + sigma * noise.to(z.dtype))
    return out


def displacement(pred, truth) -> np.ndarray:
    pred, truth = np.asarray(pred, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth shapes differ")
    return np.sqrt(np.sum((pred - truth) ** 2, axis=-1))


def ade_fde(pred, truth) -> tuple[float, float]:
    """Mean error over all steps, and the mean error at the final step; (..., T, 2) inputs."""
    d = displacement(pred, truth)
    return float(d.mean()), float(d[..., -1].mean())


def topn_hits(logits, labels, n: int) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    k = logits.shape[-1]
    if not 1 <= n <= k:
        raise ValueError(f"N={n} must lie in [1, K={k}]")
    flat = logits.reshape(-1, k)
    order = np.argsort(-flat, axis=1, kind="stable")[:, :n]  # stable sort: ties go to the lowest index
    return (order == labels.reshape(-1, 1)).any(axis=1).reshape(labels.shape)


def topn_accuracy(logits, labels, n: int) -> float:
    return float(topn_hits(logits, labels, n).mean())


def top1_beam(logits) -> np.ndarray:
    return np.argmax(np.asarray(logits), axis=-1)


def l1_rsrp_diff(k_hat, k_star, spectra) -> tuple[np.ndarray, np.ndarray]:
    """Per-step ΔP = |P[k̂] − P[k*]| and the histogram of |k̂ − k*| over distances 0..K-1."""
    k_hat = np.asarray(k_hat).astype(np.int64)
    k_star = np.asarray(k_star).astype(np.int64)
    spectra = np.asarray(spectra, dtype=np.float64)
    k = spectra.shape[-1]
    p_hat = np.take_along_axis(spectra, k_hat[..., None], axis=-1)[..., 0]
    p_star = np.take_along_axis(spectra, k_star[..., None], axis=-1)[..., 0]
    hist = np.bincount(np.abs(k_hat - k_star).ravel(), minlength=k)
    return np.abs(p_hat - p_star), hist


def rmse_mae(pred, truth) -> tuple[float, float]:
    err = np.asarray(pred, dtype=np.float64) - np.asarray(truth, dtype=np.float64)
    return float(np.sqrt(np.mean(err**2))), float(np.mean(np.abs(err)))
