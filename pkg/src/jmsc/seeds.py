"""Deterministic per-stage seed derivation from one master seed."""

from __future__ import annotations

import hashlib

import numpy as np
import torch

STAGES = ("scenario", "split", "init", "pretrain", "heads", "eval")


def hash64(master: int, name: str) -> int:
    digest = hashlib.blake2b(master.to_bytes(8, "little") + name.encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


def resolve_seeds(master: int, stages=STAGES) -> dict[str, int]:
    return {name: hash64(master, name) for name in stages}


def numpy_rng(*key: int) -> np.random.Generator:
    return np.random.default_rng([int(k) & (2**64 - 1) for k in key])


def torch_generator(seed: int) -> torch.Generator:
    # torch seeds are limited to 63 bits for some samplers
    return torch.Generator().manual_seed(seed & (2**63 - 1))
