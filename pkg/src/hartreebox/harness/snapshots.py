"""Binary wave-function snapshots (format PSIWF1) with JSON sidecars.

Layout: magic bytes "PSIWF1\\0\\0", little-endian u32 dim, u32 n,
f64 box_length, then n^d (real, imag) f64 pairs in row-major order.
The sidecar <path>.json carries provenance (scenario id, time stamp,
generator version, config hash).
"""

from __future__ import annotations

import json
import struct
import subprocess
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import SnapshotFormatError
from ..grid import Grid, WaveFunction

__all__ = ["MAGIC", "write_snapshot", "read_snapshot", "generator_version"]

MAGIC = b"PSIWF1\x00\x00"
_HEADER = struct.Struct("<IId")

_generator = None


def generator_version() -> str:
    """git describe of the working tree, or the package version."""
    global _generator
    if _generator is None:
        try:
            out = subprocess.run(
                ["git", "describe", "--always", "--dirty"],
                cwd=Path(__file__).resolve().parent,
                capture_output=True,
                text=True,
                timeout=5,
            )
            desc = out.stdout.strip()
        except (OSError, subprocess.SubprocessError):
            desc = ""
        _generator = f"hartreebox-{__version__}" + (f"+g{desc}" if desc else "")
    return _generator


def write_snapshot(path, psi: WaveFunction, sidecar: dict = None) -> Path:
    """Write psi in PSIWF1 format; sidecar metadata goes to <path>.json."""
    path = Path(path)
    grid = psi.grid
    interleaved = np.empty(2 * grid.npoints, dtype="<f8")
    flat = psi.values.ravel()
    interleaved[0::2] = flat.real
    interleaved[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(grid.dim, grid.n, grid.box_length))
        fh.write(interleaved.tobytes())
    meta = {"generator": generator_version()}
    if sidecar:
        meta.update(sidecar)
    with open(path.with_name(path.name + ".json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_snapshot(path) -> tuple:
    """Read a PSIWF1 file; returns (WaveFunction, sidecar dict or None)."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise SnapshotFormatError(
            f"{path}: bad magic at offset 0: {raw[:len(MAGIC)]!r}"
        )
    off = len(MAGIC)
    if len(raw) < off + _HEADER.size:
        raise SnapshotFormatError(f"{path}: truncated header at offset {off}")
    dim, n, box_length = _HEADER.unpack_from(raw, off)
    off += _HEADER.size
    try:
        grid = Grid(int(dim), int(n), float(box_length))
    except Exception as exc:
        raise SnapshotFormatError(f"{path}: invalid grid header: {exc}") from exc
    expected = off + 16 * grid.npoints
    if len(raw) != expected:
        raise SnapshotFormatError(
            f"{path}: expected {expected} bytes, found {len(raw)}"
        )
    interleaved = np.frombuffer(raw, dtype="<f8", offset=off)
    values = (interleaved[0::2] + 1j * interleaved[1::2]).reshape(grid.shape)
    if not np.all(np.isfinite(values)):
        raise SnapshotFormatError(f"{path}: non-finite samples")
    sidecar_path = path.with_name(path.name + ".json")
    sidecar = None
    if sidecar_path.exists():
        sidecar = json.loads(sidecar_path.read_text())
    return WaveFunction(grid, values), sidecar
