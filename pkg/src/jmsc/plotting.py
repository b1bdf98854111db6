"""PNG renderings of the CSV outputs (training curves, per-horizon metrics, error CDF)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def pretrain_curve(rows, path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ep = [r[0] for r in rows]
        ax.plot(ep, [r[1] for r in rows], marker="o", ms=2)
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean JEPA loss")
        return _save(fig, path)


def head_curves(rows, path) -> Path:
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, 3, figsize=(9.0, 2.8))
        for ax, name in zip(axes, ("localization", "beam", "rssi")):
            sel = [r for r in rows if r[0] == name]
            ax.plot([r[1] for r in sel], [r[2] for r in sel])
            ax.set_title(name)
            ax.set_xlabel("epoch")
        axes[0].set_ylabel("mean loss")
        return _save(fig, path)


def horizon_panels(rows, path) -> Path:
    """Metric versus prediction step: displacement, top-N accuracy, power loss, RSSI errors."""
    a = np.asarray(rows, dtype=np.float64)
    step = a[:, 0]
    with plt.rc_context(RC):
        fig, axes = plt.subplots(2, 2, figsize=(7.0, 5.0))
        axes[0, 0].plot(step, a[:, 1], marker="o")
        axes[0, 0].set_ylabel("mean displacement [m]")
        axes[0, 1].plot(step, a[:, 2], marker="o", label="top-1")
        axes[0, 1].plot(step, a[:, 3], marker="s", label="top-3")
        axes[0, 1].set_ylabel("accuracy")
        axes[0, 1].legend()
        axes[1, 0].plot(step, a[:, 4], marker="o")
        axes[1, 0].set_ylabel("mean L1-RSRP difference [dB]")
        axes[1, 1].plot(step, a[:, 5], marker="o", label="RMSE")
        axes[1, 1].plot(step, a[:, 6], marker="s", label="MAE")
        axes[1, 1].set_ylabel("RSSI error")
        axes[1, 1].legend()
        for ax in axes.ravel():
            ax.set_xlabel("prediction step")
        return _save(fig, path)


def error_cdf(cdf, path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.step(cdf[:, 0], cdf[:, 1], where="post")
        ax.set_xlabel("displacement error [m]")
        ax.set_ylabel("CDF")
        return _save(fig, path)


def mismatch_histogram(hist, path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        h = np.asarray(hist, dtype=np.float64)
        ax.bar(np.arange(len(h)), h / max(h.sum(), 1.0))
        ax.set_xlabel("beam index distance")
        ax.set_ylabel("fraction of steps")
        return _save(fig, path)
