"""Gnuplot-ready text output: grid dumps of snapshots and iteration tables."""
from __future__ import annotations

import logging
import warnings
from collections import defaultdict
from pathlib import Path

import numpy as np

from ..runio import read_snapshot

log = logging.getLogger(__name__)

__all__ = ["grid_dump", "iteration_table", "emit_plot_data"]


def grid_dump(u, n_side: int) -> str:
    """``x y u`` per node, with a blank line after every grid row (gnuplot ``splot`` layout)."""
    u = np.asarray(u, dtype=float)
    if u.size != n_side * n_side:
        raise ValueError(f"{u.size} values do not form a {n_side}x{n_side} grid")
    coord = np.linspace(0.0, 1.0, n_side)
    out = []
    for j in range(n_side):
        for i in range(n_side):
            out.append(f"{coord[i]:.17g} {coord[j]:.17g} {u[j * n_side + i]:.17g}")
        out.append("")
    return "\n".join(out) + "\n"


def iteration_table(rows, value="its", first_step_only=True) -> str:
    """One line per ``(p, epsilon)``: ``p epsilon its[prec/shape]...``.

    ``rows`` are CSV dictionaries with the bench column names.
    """
    table = defaultdict(dict)
    columns = []
    for row in rows:
        if first_step_only and int(row["step"]) > 1:
            continue
        col = f"{row['prec']}/{row['shape']}"
        if col not in columns:
            columns.append(col)
        key = (int(row["p"]), float(row["epsilon"]))
        table[key][col] = table[key].get(col, 0) + int(row[value])
    lines = ["# p epsilon " + " ".join(columns)]
    for key in sorted(table, key=lambda k: (k[0], -k[1])):
        vals = [str(table[key].get(c, "nan")) for c in columns]
        lines.append(f"{key[0]} {key[1]:g} " + " ".join(vals))
    return "\n".join(lines) + "\n"


def emit_plot_data(run_dir, out_dir=None, csv_rows=None) -> list:
    """Write ``<snapshot>.dat`` grid dumps (and ``iterations.dat`` if rows are given).

    Unreadable snapshots are skipped with a warning.  Returns the written paths.
    """
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    snaps = sorted(run_dir.glob("u_*.txt"))
    if not snaps:
        warnings.warn(f"no snapshots in {run_dir}", RuntimeWarning, stacklevel=2)
    for snap in snaps:
        try:
            u, k, t = read_snapshot(snap)
        except Exception as exc:
            warnings.warn(f"skipping {snap.name}: {exc}", RuntimeWarning, stacklevel=2)
            continue
        n_side = int(round(np.sqrt(u.size)))
        target = out_dir / (snap.stem + ".dat")
        target.write_text(f"# k={k} t={t!r}\n" + grid_dump(u, n_side))
        written.append(target)
    if csv_rows is not None:
        target = out_dir / "iterations.dat"
        target.write_text(iteration_table(csv_rows))
        written.append(target)
    return written
