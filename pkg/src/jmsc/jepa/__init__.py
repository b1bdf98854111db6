"""Masked latent prediction with an EMA teacher."""

from .masking import MaskSpec, future_mask, mask_length, partition_violations, sample_mask
from .model import JepaModel, backbone_features, gather_tokens, pool_future

__all__ = [
    "MaskSpec",
    "future_mask",
    "mask_length",
    "partition_violations",
    "sample_mask",
    "JepaModel",
    "backbone_features",
    "gather_tokens",
    "pool_future",
]
