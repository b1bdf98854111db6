"""Synthetic camera, FMCW radar, LiDAR, GPS and RF-scan observations of a scene."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import ScenarioConfig
from ..seeds import numpy_rng
from .codebook import BeamCodebook, channel_realization, optimal_beam, rsrp_scan
from .scene import Box, SceneState, aod

PALETTE = {
    "ground": (0.33, 0.52, 0.30),
    "road": (0.42, 0.42, 0.44),
    "ue": (0.90, 0.12, 0.10),
    "obstacle": (0.20, 0.30, 0.80),
    "blocker": (0.95, 0.80, 0.10),
    "bs": (1.0, 1.0, 1.0),
}
EARTH_RADIUS_M = 6_371_000.0


@dataclass
class MultimodalFrame:
    image: np.ndarray  # (3, H, W) in [0, 1]
    radar_if: np.ndarray  # (n_rx, n_chirp, n_adc) complex
    lidar_points: np.ndarray  # (3, n_pts) metres, sensor-centred
    gps: np.ndarray  # (2,) lon, lat degrees
    rf_scan: np.ndarray  # (K,) dB
    p_true: np.ndarray  # (2,) metres
    best_beam: int
    spectrum_db: np.ndarray  # (K,) dB, noiseless


def gps_from_local(p, bs_lonlat, earth_radius_m: float = EARTH_RADIUS_M) -> np.ndarray:
    """Inverse equirectangular projection: metres around the BS -> (lon, lat)."""
    lon0, lat0 = bs_lonlat
    k = np.pi * earth_radius_m / 180.0
    p = np.asarray(p, dtype=np.float64)
    return np.array([lon0 + p[..., 0] / (k * np.cos(np.deg2rad(lat0))), lat0 + p[..., 1] / k]).T


def wall_box(cfg: ScenarioConfig) -> Box:
    return Box(0.0, cfg.wall_y + 2.5, 200.0, 5.0, 15.0)


def render_image(scene: SceneState, cfg: ScenarioConfig) -> np.ndarray:
    h, w = cfg.image_size
    (x0, x1), (y0, y1) = cfg.view_x, cfg.view_y
    img = np.empty((3, h, w), dtype=np.float32)
    img[:] = np.array(PALETTE["ground"], dtype=np.float32)[:, None, None]
    xs = x0 + (np.arange(w) + 0.5) / w * (x1 - x0)
    ys = y1 - (np.arange(h) + 0.5) / h * (y1 - y0)

    def fill(xlo, xhi, ylo, yhi, color):
        cols = (xs >= xlo) & (xs <= xhi)
        rows = (ys >= ylo) & (ys <= yhi)
        if cols.any() and rows.any():
            img[:, rows[:, None] & cols[None, :]] = np.array(color, dtype=np.float32)[:, None]

    fill(x0, x1, 8.5, cfg.street_y[1] + 2.0, PALETTE["road"])
    for box in scene.obstacles:
        fill(*box.bounds, PALETTE["obstacle"])
    for box in scene.blockers:
        fill(*box.bounds, PALETTE["blocker"])
    if scene.ue_box is not None:
        fill(*scene.ue_box.bounds, PALETTE["ue"])
    fill(-1.0, 1.0, 0.0, 1.5, PALETTE["bs"])
    return img


def radar_tones(scatterers, cfg: ScenarioConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """FMCW IF cube for point scatterers ``(range_m, angle_rad, amplitude)``.

    Beat frequency is ``r / (range_res * n_adc)`` cycles per sample, so the
    fast-time DFT of length n_adc peaks at bin ``r / range_res``; the phase step
    across antennas is ``pi sin(angle)`` (half-wavelength spacing).
    """
    n_rx, n_chirp, n_adc = cfg.radar_n_rx, cfg.radar_n_chirp, cfg.radar_n_adc
    n = np.arange(n_adc)
    m = np.arange(n_rx)
    cube = np.zeros((n_rx, n_chirp, n_adc), dtype=np.complex128)
    for r, ang, amp in scatterers:
        fast = np.exp(2j * np.pi * r / (cfg.radar_range_res * n_adc) * n)
        spatial = np.exp(1j * np.pi * np.sin(ang) * m)
        phase0 = np.exp(4j * np.pi * r / 3.9e-3)
        cube += amp * phase0 * spatial[:, None, None] * fast[None, None, :]
    if rng is not None and cfg.radar_noise > 0:
        sigma = cfg.radar_noise / np.sqrt(2.0)
        cube += sigma * (rng.standard_normal(cube.shape) + 1j * rng.standard_normal(cube.shape))
    return cube


def lidar_scan(scene: SceneState, cfg: ScenarioConfig) -> np.ndarray:
    """Ray-cast a spinning multi-channel LiDAR against the ground plane and boxes."""
    pitch = np.deg2rad(np.linspace(-15.0, 15.0, cfg.lidar_channels))
    step = 2 * np.pi / cfg.lidar_yaw_samples
    yaw = -np.pi + step * (np.arange(cfg.lidar_yaw_samples) + 0.5)
    pp, yy = np.meshgrid(pitch, yaw, indexing="ij")
    d = np.stack([np.cos(pp) * np.cos(yy), np.cos(pp) * np.sin(yy), np.sin(pp)], axis=-1).reshape(-1, 3)
    hgt = cfg.lidar_height
    t_best = np.full(len(d), np.inf)
    down = d[:, 2] < 0
    t_best[down] = -hgt / d[down, 2]

    boxes = list(scene.obstacles) + list(scene.blockers) + [wall_box(cfg)]
    if scene.ue_box is not None:
        boxes.append(scene.ue_box)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        for box in boxes:
            x0, x1, y0, y1 = box.bounds
            lo = np.array([x0, y0, -hgt])
            hi = np.array([x1, y1, box.height - hgt])
            a = (lo - 0.0) * inv
            b = (hi - 0.0) * inv
            t0 = np.nanmax(np.minimum(a, b), axis=1)
            t1 = np.nanmin(np.maximum(a, b), axis=1)
            hit = (t1 >= t0) & (t1 > 0)
            t_enter = np.where(t0 > 0, t0, 0.0)
            t_best = np.where(hit & (t_enter < t_best), t_enter, t_best)
    keep = np.isfinite(t_best) & (t_best > 0) & (t_best <= cfg.lidar_max_range)
    return (d[keep] * t_best[keep, None]).T.astype(np.float32)


def render_sensors(scene: SceneState, cfg: ScenarioConfig, codebook: BeamCodebook, seed: int) -> MultimodalFrame:
    rng = numpy_rng(seed, scene.t)
    image = render_image(scene, cfg)

    scat = [(float(np.hypot(*scene.position)), aod(scene.position), 1.0)]
    for box in scene.blockers:
        c = np.array([box.cx, box.cy])
        if c[1] > 0:
            scat.append((float(np.hypot(*c)), aod(c), 1.5))
    for box in scene.obstacles:
        c = np.array([box.cx, box.cy])
        scat.append((float(np.hypot(*c)), aod(c), 0.7))
    max_r = cfg.radar_range_res * cfg.radar_n_adc
    radar = radar_tones([s for s in scat if s[0] < max_r], cfg, rng)

    points = lidar_scan(scene, cfg)

    noisy = scene.position + cfg.gps_sigma_m * rng.standard_normal(2) if cfg.gps_sigma_m > 0 else scene.position
    gps = gps_from_local(noisy, (cfg.bs_lon, cfg.bs_lat))

    h = channel_realization(scene.gains, scene.aods, codebook)
    spectrum_db, _ = rsrp_scan(h, codebook, cfg.p_tx, cfg.noise_power, cfg.floor_db)
    rf = spectrum_db + cfg.rf_noise_db * rng.standard_normal(spectrum_db.shape) if cfg.rf_noise_db > 0 else spectrum_db.copy()
    return MultimodalFrame(image, radar, points, gps, rf, scene.position.copy(), optimal_beam(spectrum_db), spectrum_db)
