"""Module state, optimizer state and metadata in one container file."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import container
from .provenance import stamp


def module_records(module: nn.Module, prefix: str) -> dict[str, np.ndarray]:
    return {f"{prefix}/{k}": v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def load_module_records(module: nn.Module, records: dict, prefix: str) -> None:
    own = module.state_dict()
    state = {}
    for k, ref in own.items():
        key = f"{prefix}/{k}"
        if key not in records:
            raise KeyError(f"checkpoint lacks {key}")
        arr = np.asarray(records[key])
        if tuple(arr.shape) != tuple(ref.shape):
            raise ValueError(f"{key}: shape {arr.shape} != {tuple(ref.shape)}")
        state[k] = torch.from_numpy(np.ascontiguousarray(arr)).to(ref.dtype)
    module.load_state_dict(state)


def parameter_hash(module: nn.Module) -> str:
    """sha256 over every state tensor in name order."""
    h = hashlib.sha256()
    for k, v in sorted(module.state_dict().items()):
        h.update(k.encode())
        h.update(np.ascontiguousarray(v.detach().cpu().numpy()).tobytes())
    return h.hexdigest()


def save_checkpoint(path, kind: str, cfg, modules: dict[str, nn.Module], extra: dict | None = None,
                    meta: dict | None = None) -> Path:
    rec: dict = {}
    for prefix, module in modules.items():
        rec.update(module_records(module, prefix))
    for k, v in (extra or {}).items():
        rec[k] = v
    info = {"kind": kind, **stamp(cfg.hash()), **(meta or {})}
    rec["meta/info"] = container.pack_text(json.dumps(info, sort_keys=True))
    rec["meta/config"] = container.pack_text(cfg.to_json())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    container.save(path, rec)
    return path


def read_checkpoint(path) -> tuple[dict, dict, dict]:
    """-> (records, info, config dict)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    rec = container.load(path)
    if "meta/info" not in rec or "meta/config" not in rec:
        raise container.ContainerError(f"{path} carries no checkpoint metadata")
    info = json.loads(container.unpack_text(rec["meta/info"]))
    cfg = json.loads(container.unpack_text(rec["meta/config"]))
    return rec, info, cfg
