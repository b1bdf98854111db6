"""Mask sampling over the canonical token layout."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..config import MASK_PATTERNS
from ..tokenizer import MODALITY_ID, TokenLayout


@dataclass(frozen=True)
class MaskSpec:
    pattern: str
    rho: float
    mask_idx: np.ndarray  # sorted token indices
    keep_idx: np.ndarray  # sorted token indices
    frames: dict  # modality -> tuple of masked frame indices

    @property
    def n_tokens(self) -> int:
        return len(self.mask_idx) + len(self.keep_idx)


def mask_length(T: int, rho: float) -> int:
    n = math.floor(rho * T + 1e-9)
    if not 1 <= n <= T - 1:
        raise ValueError(f"mask ratio {rho} gives T_mask={n}; need 1 <= T_mask <= {T - 1}")
    return n


def _checkerboard_frames(m: int, T: int, n: int) -> list[int]:
    chosen = [t for t in range(T) if (m + t) % 2 == 0]
    if len(chosen) >= n:
        return chosen[:n]
    extra = [t for t in range(T) if t not in chosen]
    return sorted(chosen + extra[: n - len(chosen)])


def _frames_for(pattern: str, m: int, T: int, n: int, rng: np.random.Generator) -> list[int]:
    if pattern == "temporal-block":
        start = int(rng.integers(0, T - n + 1))
        return list(range(start, start + n))
    if pattern == "random":
        return sorted(int(t) for t in rng.choice(T, size=n, replace=False))
    if pattern == "checkerboard":
        return _checkerboard_frames(m, T, n)
    raise ValueError(f"unknown mask pattern {pattern!r}; expected one of {MASK_PATTERNS}")


def sample_mask(layout: TokenLayout, rho: float, rng: np.random.Generator, pattern: str = "temporal-block") -> MaskSpec:
    """Choose masked frames independently per modality and mask all their tokens."""
    T = len(layout.frames)
    n = mask_length(T, rho)
    masked = np.zeros(layout.n_tokens, dtype=bool)
    frames = {}
    for name in layout.modalities:
        local = _frames_for(pattern, MODALITY_ID[name], T, n, rng)
        chosen = tuple(layout.frames[t] for t in local)
        frames[name] = chosen
        masked |= (layout.coords[:, 0] == MODALITY_ID[name]) & np.isin(layout.coords[:, 1], chosen)
    return MaskSpec(pattern, float(rho), np.flatnonzero(masked), np.flatnonzero(~masked), frames)


def future_mask(layout: TokenLayout, t_hist: int) -> MaskSpec:
    """Visible = history frames, masked = every token of the remaining frames."""
    if t_hist >= len(layout.frames):
        raise ValueError("no future frames to predict")
    fut = layout.frames[t_hist:]
    masked = np.isin(layout.coords[:, 1], fut)
    frames = {m: tuple(fut) for m in layout.modalities}
    rho = len(fut) / len(layout.frames)
    return MaskSpec("future", rho, np.flatnonzero(masked), np.flatnonzero(~masked), frames)


def partition_violations(spec: MaskSpec, layout: TokenLayout) -> list[str]:
    """Empty list iff ``spec`` partitions the layout and masks whole modality-frames."""
    out = []
    if len(spec.mask_idx) < 1:
        out.append("empty mask set")
    if len(np.intersect1d(spec.mask_idx, spec.keep_idx)):
        out.append("mask and keep overlap")
    if not np.array_equal(np.union1d(spec.mask_idx, spec.keep_idx), np.arange(layout.n_tokens)):
        out.append("mask and keep do not cover all tokens")
    rows = layout.coords[spec.mask_idx]
    for name in layout.modalities:
        got = set(rows[rows[:, 0] == MODALITY_ID[name], 1].tolist())
        if got != set(spec.frames[name]):
            out.append(f"{name}: masked frames disagree with spec")
        want = layout.coords[np.isin(layout.coords[:, 1], spec.frames[name]) & (layout.coords[:, 0] == MODALITY_ID[name])]
        if len(want) != int((rows[:, 0] == MODALITY_ID[name]).sum()):
            out.append(f"{name}: partially masked frame")
    return out
