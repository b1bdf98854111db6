"""Synthetic V2I scenario generation: geometry, channels, sensors, datasets."""

from .codebook import BeamCodebook, build_codebook, channel_realization, optimal_beam, rsrp_scan, steering
from .dataset import generate_dataset, read_manifest, read_window
from .scene import Box, SceneState, segment_hits_box, simulate_trajectory
from .sensors import MultimodalFrame, gps_from_local, render_sensors

__all__ = [
    "BeamCodebook", "Box", "MultimodalFrame", "SceneState", "build_codebook", "channel_realization",
    "generate_dataset", "gps_from_local", "optimal_beam", "read_manifest", "read_window",
    "render_sensors", "rsrp_scan", "segment_hits_box", "simulate_trajectory", "steering",
]
