"""Versioned binary tensor container shared by checkpoints and dataset windows.

Layout (all integers little-endian)::

    b"JMSC" | version u32 | record* | crc32 u32

    record = name_len u32 | name utf-8 | dtype u8 | rank u32 | extent u32 * rank | payload

The trailing CRC32 covers every byte before it.  ``dtype`` is 0 for f32,
1 for f64 and 2 for raw bytes (u8); f64 is needed for geodetic coordinates,
which f32 cannot hold to sub-metre precision.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"JMSC"
VERSION = 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("uint8"): 2}


class ContainerError(ValueError):
    """Raised for malformed or corrupted container files."""


def _as_array(value) -> np.ndarray:
    if hasattr(value, "detach"):
        value = value.detach().cpu().numpy()
    arr = np.asarray(value)
    if arr.dtype not in _CODES:
        if np.issubdtype(arr.dtype, np.integer) or arr.dtype == np.bool_:
            arr = arr.astype(np.float64)
        else:
            arr = arr.astype(np.float32)
    return np.ascontiguousarray(arr).reshape(arr.shape)  # ascontiguousarray promotes 0-d to 1-d


def encode(tensors: Mapping[str, object]) -> bytes:
    """Serialize named arrays into container bytes, preserving insertion order."""
    parts = [MAGIC, struct.pack("<I", VERSION)]
    for name, value in tensors.items():
        arr = _as_array(value)
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BI", _CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode(blob: bytes) -> dict[str, np.ndarray]:
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise ContainerError("bad magic")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise ContainerError("CRC mismatch")
    (version,) = struct.unpack_from("<I", body, 4)
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    out: dict[str, np.ndarray] = {}
    pos = 8
    while pos < len(body):
        (n,) = struct.unpack_from("<I", body, pos)
        pos += 4
        name = body[pos : pos + n].decode("utf-8")
        pos += n
        code, rank = struct.unpack_from("<BI", body, pos)
        pos += 5
        if code not in _DTYPES:
            raise ContainerError(f"unknown dtype code {code} for {name!r}")
        shape = struct.unpack_from(f"<{rank}I", body, pos)
        pos += 4 * rank
        dtype = _DTYPES[code]
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * dtype.itemsize
        if pos + nbytes > len(body):
            raise ContainerError(f"truncated payload for {name!r}")
        out[name] = np.frombuffer(body, dtype=dtype, count=count, offset=pos).reshape(shape).copy()
        pos += nbytes
    return out


def save(path, tensors: Mapping[str, object]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode(tensors))
    tmp.replace(path)


def load(path) -> dict[str, np.ndarray]:
    return decode(Path(path).read_bytes())


def pack_text(text: str) -> np.ndarray:
    """Store a UTF-8 string (e.g. a JSON config echo) as a u8 record."""
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).copy()


def unpack_text(arr: np.ndarray) -> str:
    return arr.astype(np.uint8).tobytes().decode("utf-8")
