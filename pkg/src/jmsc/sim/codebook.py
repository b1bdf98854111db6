"""ULA steering codebook, geometric narrowband channel and per-beam RSRP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BeamCodebook:
    n_ant: int
    wavelength: float
    spacing: float
    azimuths: np.ndarray  # (K,) radians, strictly increasing
    weights: np.ndarray  # (K, n_ant) complex, unit-norm rows

    @property
    def n_beams(self) -> int:
        return len(self.azimuths)


def steering(n_ant: int, angle, wavelength: float, spacing: float) -> np.ndarray:
    """Unit-norm ULA response(s); ``angle`` scalar or (L,) array -> (..., n_ant)."""
    n = np.arange(n_ant)
    phase = 2.0 * np.pi / wavelength * spacing * np.multiply.outer(np.sin(angle), n)
    return np.exp(1j * phase) / np.sqrt(n_ant)


def build_codebook(
    n_ant: int,
    n_beams: int,
    wavelength: float,
    spacing: float | None = None,
    span_deg: float = 60.0,
    azimuths=None,
) -> BeamCodebook:
    """Beams on a uniform azimuth grid over ``[-span, +span]`` (or explicit ``azimuths``)."""
    if n_ant < 2 or n_beams < 2:
        raise ValueError("need n_ant >= 2 and n_beams >= 2")
    spacing = wavelength / 2.0 if spacing is None else spacing
    if wavelength <= 0 or spacing <= 0:
        raise ValueError("wavelength and spacing must be positive")
    if azimuths is None:
        span = np.deg2rad(span_deg)
        azimuths = np.linspace(-span, span, n_beams)
    azimuths = np.asarray(azimuths, dtype=np.float64)
    if len(azimuths) != n_beams or np.any(np.diff(azimuths) <= 0):
        raise ValueError("azimuths must be strictly increasing with one entry per beam")
    return BeamCodebook(n_ant, wavelength, spacing, azimuths, steering(n_ant, azimuths, wavelength, spacing))


def channel_realization(gains, aods, codebook: BeamCodebook) -> np.ndarray:
    """``h = sqrt(N/L) * sum_l alpha_l a(theta_l)`` for L >= 1 paths."""
    gains = np.atleast_1d(np.asarray(gains, dtype=np.complex128))
    aods = np.atleast_1d(np.asarray(aods, dtype=np.float64))
    if gains.size == 0 or gains.shape != aods.shape:
        raise ValueError("need one AoD per gain and at least one path")
    resp = steering(codebook.n_ant, aods, codebook.wavelength, codebook.spacing)
    return np.sqrt(codebook.n_ant / len(gains)) * (gains[:, None] * resp).sum(axis=0)


def rsrp_scan(h, codebook: BeamCodebook, p_tx: float = 1.0, noise_power: float = 0.0, floor_db: float = -174.0):
    """Per-beam received power; returns ``(x_db, linear)``.

    ``linear[k] = p_tx |h^H w_k|^2 + noise_power``; ``x_db`` is the dB value
    clipped below at ``p_tx * 10**(floor_db/10)``.
    """
    gain = np.abs(codebook.weights @ np.conj(np.asarray(h))) ** 2
    linear = p_tx * gain + noise_power
    floor = p_tx * 10.0 ** (floor_db / 10.0)
    return 10.0 * np.log10(np.maximum(linear, floor)), linear


def optimal_beam(spectrum) -> int:
    """Argmax of the spectrum; ``np.argmax`` already returns the lowest tied index."""
    spectrum = np.asarray(spectrum)
    if spectrum.size == 0:
        raise ValueError("empty spectrum")
    return int(np.argmax(spectrum))
