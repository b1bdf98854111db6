"""Build identifier and output-file provenance stamps."""

from __future__ import annotations

import functools
import subprocess
from pathlib import Path

import numpy as np

from . import __version__


@functools.lru_cache(maxsize=1)
def build_id() -> str:
    """``jmsc-<version>`` plus ``git describe --always --dirty`` when available."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=here,
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        out = ""
    return f"jmsc-{__version__}" + (f"-g{out}" if out else "")


def stamp(config_hash: str) -> dict[str, str]:
    return {"config_hash": config_hash, "build": build_id()}


def csv_header_comment(config_hash: str) -> str:
    return f"# config_hash={config_hash} build={build_id()}\n"


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header: str, rows, config_hash: str) -> None:
    """CSV with a leading ``# config_hash=... build=...`` comment line; floats round-trip exactly."""
    lines = [csv_header_comment(config_hash) + header]
    lines += [",".join(_cell(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")
