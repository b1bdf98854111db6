"""Modality-specific transforms from raw sensor fields to model-ready arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .config import PreprocessConfig

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class ProcessedFrame:
    V: np.ndarray  # (3, H_V, W_V)
    R: np.ndarray  # (A, R) range-angle magnitudes
    L: np.ndarray  # (1, H, W) normalised depth
    p: np.ndarray  # (2,) metres, float64
    x_rf: np.ndarray  # (K,) dB (normalisation applied later with train stats)


def center_crop_square(image: np.ndarray) -> np.ndarray:
    _, h, w = image.shape
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    return image[:, top : top + s, left : left + s]


def resize_bilinear(image: np.ndarray, size) -> np.ndarray:
    """Bilinear resize of a (C, H, W) array, half-pixel centres, no antialiasing."""
    h, w = size
    if image.shape[1:] == (h, w):
        return np.array(image, dtype=np.float32, copy=True)
    t = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))[None]
    return F.interpolate(t, size=(h, w), mode="bilinear", align_corners=False)[0].numpy()


def preprocess_vision(image, size=(224, 224), mean=IMAGENET_MEAN, std=IMAGENET_STD, crop: bool = True) -> np.ndarray:
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected a 3-channel (3, H, W) image, got shape {image.shape}")
    if min(image.shape[1:]) < 1:
        raise ValueError("image extents must be positive")
    if crop:
        image = center_crop_square(image)
    out = resize_bilinear(image, size)
    mu = np.asarray(mean, dtype=np.float32)[:, None, None]
    sd = np.asarray(std, dtype=np.float32)[:, None, None]
    return (out - mu) / sd


def radar_range_angle(radar_if, n_fft: int = 64, remove_clutter: bool = True) -> np.ndarray:
    """Range-angle magnitude map (angle bins x range bins), averaged over chirps.

    Fast-time DFT -> subtract the across-antenna mean per range bin ->
    antenna DFT (zero-padded to ``n_fft``, zero angle centred at bin n_fft//2)
    -> magnitude -> mean over chirps.
    """
    x = np.asarray(radar_if)
    if x.ndim != 3:
        raise ValueError("radar cube must be (n_rx, n_chirp, n_adc)")
    n_rx, n_chirp, _ = x.shape
    if n_chirp == 0:
        raise ValueError("radar cube has zero chirps")
    if n_rx < 2:
        raise ValueError("need at least 2 receive antennas")
    rng_fft = np.fft.fft(x, n=n_fft, axis=2)
    if remove_clutter:
        rng_fft = rng_fft - rng_fft.mean(axis=0, keepdims=True)
    ang = np.fft.fftshift(np.fft.fft(rng_fft, n=n_fft, axis=0), axes=0)
    return np.abs(ang).mean(axis=1).astype(np.float32)


def lidar_depth_projection(points, hw=(64, 256), fov_deg=(15.0, -15.0), d_max: float = 100.0) -> np.ndarray:
    """Spherical projection keeping the nearest normalised range per pixel; empty pixels are 1."""
    h, w = hw
    f_up, f_down = np.deg2rad(fov_deg[0]), np.deg2rad(fov_deg[1])
    if not f_up > f_down:
        raise ValueError("f_up must exceed f_down")
    pts = np.asarray(points, dtype=np.float64)
    depth = np.ones((1, h, w), dtype=np.float32)
    if pts.size == 0:
        return depth
    x, y, z = pts
    r = np.sqrt(x * x + y * y + z * z)
    yaw = np.arctan2(y, x)
    pitch = np.arcsin(np.clip(z / np.maximum(r, 1e-12), -1.0, 1.0))
    keep = (r <= d_max) & (r > 0) & (pitch >= f_down) & (pitch <= f_up)
    r, yaw, pitch = r[keep], yaw[keep], pitch[keep]
    u = np.clip(np.floor((yaw + np.pi) / (2 * np.pi) * w).astype(np.int64), 0, w - 1)
    v = np.clip(np.floor((1.0 - (pitch - f_down) / (f_up - f_down)) * h).astype(np.int64), 0, h - 1)
    flat = depth.reshape(-1)
    # minimum.at is unbuffered, so duplicates resolve to the nearest return regardless of order
    np.minimum.at(flat, v * w + u, (r / d_max).astype(np.float32))
    return depth


def gps_local_projection(gps, bs_lonlat, earth_radius_km: float = 6371.0) -> np.ndarray:
    """Equirectangular (lon, lat) -> metres relative to the BS; works on (..., 2)."""
    lon0, lat0 = bs_lonlat
    if abs(lat0) >= 89.9:
        raise ValueError("BS latitude too close to a pole for equirectangular projection")
    gps = np.asarray(gps, dtype=np.float64)
    if np.any(np.abs(gps[..., 1]) >= 90.0):
        raise ValueError("latitude outside (-90, 90)")
    k = np.pi * earth_radius_km * 1000.0 / 180.0
    scale = np.array([np.cos(np.deg2rad(lat0)), 1.0])
    return k * scale * (gps - np.array([lon0, lat0]))


def gps_local_inverse(p, bs_lonlat, earth_radius_km: float = 6371.0) -> np.ndarray:
    lon0, lat0 = bs_lonlat
    k = np.pi * earth_radius_km * 1000.0 / 180.0
    scale = np.array([np.cos(np.deg2rad(lat0)), 1.0])
    return np.asarray(p, dtype=np.float64) / (k * scale) + np.array([lon0, lat0])


@dataclass(frozen=True)
class RFStats:
    lo: float
    hi: float

    @property
    def degenerate(self) -> bool:
        return not self.hi > self.lo

    @classmethod
    def fit(cls, x_db) -> "RFStats":
        x = np.asarray(x_db, dtype=np.float64)
        if not np.isfinite(x).all():
            raise ValueError("non-finite RF values")
        return cls(float(x.min()), float(x.max()))


def normalize_rf(x_db, stats: RFStats) -> np.ndarray:
    """Global min-max to [0, 1] in dB; degenerate stats map everything to 0.5."""
    x = np.asarray(x_db, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("non-finite RF values")
    if stats.degenerate:
        return np.full_like(x, 0.5)
    return (x - stats.lo) / (stats.hi - stats.lo)


def denormalize_rf(x, stats: RFStats) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if stats.degenerate:
        return np.full_like(x, stats.lo)
    return x * (stats.hi - stats.lo) + stats.lo


def preprocess_frame(frame, cfg: PreprocessConfig, bs_lonlat) -> ProcessedFrame:
    return ProcessedFrame(
        V=preprocess_vision(frame.image, tuple(cfg.vision_size), cfg.vision_mean, cfg.vision_std),
        R=radar_range_angle(frame.radar_if, cfg.radar_dft),
        L=lidar_depth_projection(frame.lidar_points, tuple(cfg.lidar_hw), tuple(cfg.lidar_fov_deg), cfg.lidar_dmax),
        p=gps_local_projection(frame.gps, bs_lonlat, cfg.earth_radius_km),
        x_rf=np.asarray(frame.rf_scan, dtype=np.float64),
    )
