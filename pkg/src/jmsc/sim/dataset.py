"""Dataset generation and persistence: sliding windows over simulated sequences."""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from .. import container
from ..config import RunConfig
from ..provenance import stamp
from ..seeds import numpy_rng, resolve_seeds
from .codebook import build_codebook
from .scene import simulate_trajectory, wavelength
from .sensors import MultimodalFrame, render_sensors

log = logging.getLogger(__name__)

FRAME_FIELDS = ("image", "radar_re", "radar_im", "lidar", "gps", "rf", "p_true", "best_beam", "spectrum")


def codebook_for(cfg: RunConfig):
    s = cfg.scenario
    lam = wavelength(s)
    return build_codebook(s.n_ant, s.n_beams, lam, s.spacing_wavelengths * lam, s.az_span_deg)


def simulate_sequence(cfg: RunConfig, index: int, scenario_seed: int) -> list[MultimodalFrame]:
    seq_seed = scenario_seed ^ index
    cb = codebook_for(cfg)
    states = simulate_trajectory(cfg.scenario, seq_seed)
    return [render_sensors(st, cfg.scenario, cb, seq_seed) for st in states]


def window_starts(seq_len: int, T: int, stride: int) -> list[int]:
    return list(range(0, seq_len - T + 1, stride))


def split_windows(n: int, fraction: float, seed: int) -> list[str]:
    """Shuffle window indices; the first ``floor(fraction*n)`` go to train."""
    order = numpy_rng(seed).permutation(n)
    n_train = int(np.floor(fraction * n + 1e-9))  # 0.7 * 130 is 90.999...
    split = ["test"] * n
    for i in order[:n_train]:
        split[int(i)] = "train"
    return split


def frame_records(frame: MultimodalFrame, prefix: str) -> dict[str, np.ndarray]:
    return {
        f"{prefix}/image": frame.image.astype(np.float32),
        f"{prefix}/radar_re": frame.radar_if.real.astype(np.float32),
        f"{prefix}/radar_im": frame.radar_if.imag.astype(np.float32),
        f"{prefix}/lidar": frame.lidar_points.astype(np.float32),
        f"{prefix}/gps": frame.gps.astype(np.float64),
        f"{prefix}/rf": frame.rf_scan.astype(np.float64),
        f"{prefix}/p_true": frame.p_true.astype(np.float64),
        f"{prefix}/best_beam": np.array([frame.best_beam], dtype=np.float64),
        f"{prefix}/spectrum": frame.spectrum_db.astype(np.float64),
    }


def frame_from_records(rec: dict, prefix: str) -> MultimodalFrame:
    return MultimodalFrame(
        image=rec[f"{prefix}/image"],
        radar_if=rec[f"{prefix}/radar_re"].astype(np.complex128) + 1j * rec[f"{prefix}/radar_im"],
        lidar_points=rec[f"{prefix}/lidar"],
        gps=rec[f"{prefix}/gps"],
        rf_scan=rec[f"{prefix}/rf"],
        p_true=rec[f"{prefix}/p_true"],
        best_beam=int(rec[f"{prefix}/best_beam"][0]),
        spectrum_db=rec[f"{prefix}/spectrum"],
    )


def generate_dataset(cfg: RunConfig, out_dir) -> dict:
    """Simulate all sequences and write ``manifest.json`` plus one file per window."""
    out = Path(out_dir)
    try:
        (out / "windows").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {out}: {exc}") from exc
    s = cfg.scenario
    if s.n_sequences < 1:
        raise ValueError("need at least one sequence")
    seeds = resolve_seeds(cfg.seed)
    starts = window_starts(s.seq_len, s.T, s.stride)
    windows = []
    for seq in range(s.n_sequences):
        frames = simulate_sequence(cfg, seq, seeds["scenario"])
        for start in starts:
            rec = {"meta/index": np.array([seq, start], dtype=np.float64)}
            for j in range(s.T):
                rec.update(frame_records(frames[start + j], f"f{j:02d}"))
            blob = container.encode(rec)
            name = f"windows/s{seq:04d}_t{start:04d}.jmsc"
            (out / name).write_bytes(blob)
            windows.append({"file": name, "sequence": seq, "start": start, "sha256": hashlib.sha256(blob).hexdigest()})
        log.info("sequence %d/%d written", seq + 1, s.n_sequences)
    split = split_windows(len(windows), s.split_fraction, seeds["split"])
    for w, part in zip(windows, split):
        w["split"] = part
    manifest = {
        **stamp(cfg.hash()),
        "config": cfg.to_dict(),
        "seeds": seeds,
        "n_windows": len(windows),
        "n_train": split.count("train"),
        "n_test": split.count("test"),
        "windows": windows,
    }
    text = json.dumps(manifest, sort_keys=True, indent=1)
    (out / "manifest.json").write_text(text)
    return manifest


def manifest_hash(data_dir) -> str:
    return hashlib.sha256(Path(data_dir, "manifest.json").read_bytes()).hexdigest()


def read_manifest(data_dir) -> dict:
    path = Path(data_dir) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"dataset manifest not found: {path}")
    return json.loads(path.read_text())


def read_window(data_dir, entry: dict, T: int) -> list[MultimodalFrame]:
    rec = container.load(Path(data_dir) / entry["file"])
    return [frame_from_records(rec, f"f{j:02d}") for j in range(T)]
