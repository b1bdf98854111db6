"""In-memory view of a generated dataset: preprocessed frames shared across windows."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .preprocess import RFStats, normalize_rf, preprocess_frame
from .sim.dataset import read_manifest, read_window

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NormStats:
    """Input scalings fitted on the training split and stored with every checkpoint."""

    rf_lo: float
    rf_hi: float
    radar_scale: float
    pos_scale: float

    @property
    def rf(self) -> RFStats:
        return RFStats(self.rf_lo, self.rf_hi)

    def to_array(self) -> np.ndarray:
        return np.array([self.rf_lo, self.rf_hi, self.radar_scale, self.pos_scale], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "NormStats":
        a = np.asarray(a, dtype=np.float64)
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


class FrameStore:
    """Each unique (sequence, frame) is preprocessed once; windows index into it."""

    def __init__(self, cfg: RunConfig, frames: dict, index: np.ndarray, split: list[str], stats: NormStats,
                 manifest: dict | None = None):
        self.cfg = cfg
        self.index = index  # (W, T) rows into the frame arrays
        self.split = split
        self.stats = stats
        self.manifest = manifest or {}
        self.V = frames["V"]
        self.R = frames["R"]
        self.L = frames["L"]
        self.p = frames["p"]
        self.rf_db = frames["rf_db"]
        self.p_true = frames["p_true"]
        self.best_beam = frames["best_beam"]
        self.spectrum = frames["spectrum"]
        self.R_in = (self.R / stats.radar_scale).astype(np.float32)
        self.rf_norm = normalize_rf(self.rf_db, stats.rf)
        self.spectrum_norm = normalize_rf(self.spectrum, stats.rf)

    @property
    def n_windows(self) -> int:
        return len(self.index)

    def ids(self, part: str) -> np.ndarray:
        return np.array([i for i, s in enumerate(self.split) if s == part], dtype=np.int64)

    @classmethod
    def load(cls, data_dir, cfg: RunConfig, stats: NormStats | None = None) -> "FrameStore":
        data_dir = Path(data_dir)
        manifest = read_manifest(data_dir)
        T = cfg.scenario.T
        bs = (cfg.scenario.bs_lon, cfg.scenario.bs_lat)
        rows: dict[tuple[int, int], int] = {}
        cols = {k: [] for k in ("V", "R", "L", "p", "rf_db", "p_true", "best_beam", "spectrum")}
        index, split = [], []
        for entry in manifest["windows"]:
            win = None
            ids = []
            for j in range(T):
                key = (entry["sequence"], entry["start"] + j)
                if key not in rows:
                    if win is None:
                        win = read_window(data_dir, entry, T)
                    f = win[j]
                    pf = preprocess_frame(f, cfg.preprocess, bs)
                    rows[key] = len(cols["V"])
                    for name, value in (("V", pf.V), ("R", pf.R), ("L", pf.L), ("p", pf.p), ("rf_db", pf.x_rf),
                                        ("p_true", f.p_true), ("best_beam", f.best_beam), ("spectrum", f.spectrum_db)):
                        cols[name].append(value)
                ids.append(rows[key])
            index.append(ids)
            split.append(entry["split"])
        frames = {k: np.stack(v) if k != "best_beam" else np.asarray(v, dtype=np.int64) for k, v in cols.items()}
        index = np.asarray(index, dtype=np.int64)
        if stats is None:
            stats = fit_stats(frames, index, split, cfg.preprocess.pos_scale)
        log.info("loaded %d windows over %d unique frames", len(index), len(frames["V"]))
        return cls(cfg, frames, index, split, stats, manifest)

    def inputs(self, ids, frames=None) -> dict[str, torch.Tensor]:
        """Model inputs (B, T', ...) for the given windows; ``frames`` limits the time range."""
        rows = self.index[np.asarray(ids, dtype=np.int64)]
        if frames is not None:
            rows = rows[:, list(frames)]
        return {
            "image": torch.from_numpy(self.V[rows]),
            "radar": torch.from_numpy(self.R_in[rows]),
            "lidar": torch.from_numpy(self.L[rows]),
            "gps": torch.from_numpy((self.p[rows] / self.stats.pos_scale).astype(np.float32)),
            "rf": torch.from_numpy(self.rf_norm[rows].astype(np.float32)),
        }

    def labels(self, ids) -> dict[str, np.ndarray]:
        rows = self.index[np.asarray(ids, dtype=np.int64)]
        return {
            "p": self.p[rows],
            "p_true": self.p_true[rows],
            "best_beam": self.best_beam[rows],
            "spectrum_db": self.spectrum[rows],
            "spectrum_norm": self.spectrum_norm[rows],
            "rf_norm": self.rf_norm[rows],
        }


def fit_stats(frames: dict, index: np.ndarray, split: list[str], pos_scale: float) -> NormStats:
    train = [i for i, s in enumerate(split) if s == "train"]
    if not train:
        raise ValueError("training split is empty")
    rows = np.unique(index[train])
    rf = RFStats.fit(frames["rf_db"][rows])
    radar_max = float(frames["R"][rows].max())
    return NormStats(rf.lo, rf.hi, radar_max if radar_max > 0 else 1.0, pos_scale)
