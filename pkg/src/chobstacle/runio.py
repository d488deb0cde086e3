"""Run manifests (``key=value`` text) and state snapshots.

A snapshot is a text file whose first three lines hold ``n``, the time-step
index ``k`` and the physical time, followed by ``n`` values, one per line.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError

__all__ = ["write_manifest", "read_manifest", "write_snapshot", "read_snapshot", "snapshot_name"]


def write_manifest(path, entries: dict) -> Path:
    path = Path(path)
    lines = []
    for key, value in entries.items():
        key = str(key)
        if "=" in key or "\n" in key or "\n" in str(value):
            raise ConfigurationError(f"manifest entry {key!r} cannot be written as key=value")
        lines.append(f"{key}={value}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_manifest(path) -> dict:
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigurationError(f"malformed manifest line {raw!r}")
        out[key.strip()] = value.strip()
    return out


def snapshot_name(k: int) -> str:
    return f"u_{k:05d}.txt"


def write_snapshot(path, u, k: int, t: float) -> Path:
    path = Path(path)
    u = np.asarray(u, dtype=float).ravel()
    with path.open("w") as fh:
        fh.write(f"{u.size}\n{int(k)}\n{float(t)!r}\n")
        np.savetxt(fh, u, fmt="%.17g")
    return path


def read_snapshot(path):
    """Returns ``(u, k, t)``."""
    with Path(path).open() as fh:
        try:
            n = int(fh.readline())
            k = int(fh.readline())
            t = float(fh.readline())
        except ValueError as exc:
            raise ConfigurationError(f"{path}: malformed snapshot header") from exc
        u = np.loadtxt(fh, dtype=float, ndmin=1)
    if u.size != n:
        raise ConfigurationError(f"{path}: header says {n} values, found {u.size}")
    return u, k, t
