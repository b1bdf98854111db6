"""Multimodal masked latent-prediction pretraining for mmWave V2I sensing-aided PHY tasks."""

__version__ = "0.1.0"
