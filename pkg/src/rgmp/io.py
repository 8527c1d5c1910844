"""CSV import/export for instances, traces, estimates and spectra.

Floats are written with ``repr`` so that every value round-trips exactly.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .detectors import DetectionResult
from .engine import RunTrace
from .geometry import ChannelMatrix, Placement, SparseChannel
from .graph import FactorGraph


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_rows(path, rows: Iterable[Mapping], columns: list[str] | None = None) -> Path:
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k, "")) for k in columns})
    return path


def read_rows(path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_placement(path, placement: Placement) -> Path:
    rows = [
        {"kind": kind, "index": i, "x_m": p[0], "y_m": p[1]}
        for kind, pts in (("rrh", placement.rrh_positions), ("user", placement.user_positions))
        for i, p in enumerate(pts)
    ]
    return write_rows(path, rows, ["kind", "index", "x_m", "y_m"])


def write_channel(path, channel: ChannelMatrix) -> Path:
    n, k = channel.shape
    rows = [
        {"n": i, "k": j, "d_m": channel.distances[i, j],
         "re": channel.entries[i, j].real, "im": channel.entries[i, j].imag}
        for i in range(n)
        for j in range(k)
    ]
    return write_rows(path, rows, ["n", "k", "d_m", "re", "im"])


def write_edges(path, edges: FactorGraph | SparseChannel) -> Path:
    rows = [
        {"n": n, "k": k, "re": c.real, "im": c.imag}
        for n, k, c in zip(edges.rows.tolist(), edges.cols.tolist(), edges.coeffs.tolist())
    ]
    return write_rows(path, rows, ["n", "k", "re", "im"])


def read_edges(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = read_rows(path)
    n = np.array([int(r["n"]) for r in rows], dtype=np.intp)
    k = np.array([int(r["k"]) for r in rows], dtype=np.intp)
    c = np.array([complex(float(r["re"]), float(r["im"])) for r in rows])
    return n, k, c


def write_trace(path, trace: RunTrace) -> Path:
    rows = [{"iteration": t, "delta": d} for t, d in enumerate(trace.deltas, start=1)]
    return write_rows(path, rows, ["iteration", "delta"])


def write_estimates(path, trace: RunTrace) -> Path:
    rows = [
        {"k": k, "re": x.real, "im": x.imag, "v_k": v}
        for k, (x, v) in enumerate(zip(trace.estimates.tolist(), trace.variances.tolist()))
    ]
    return write_rows(path, rows, ["k", "re", "im", "v_k"])


def write_detection(path, result: DetectionResult) -> Path:
    rows = [
        {"k": k, "re": x.real, "im": x.imag, "method": result.method}
        for k, x in enumerate(result.estimates.tolist())
    ]
    return write_rows(path, rows, ["k", "re", "im", "method"])


def write_matrix(path, matrix: np.ndarray) -> Path:
    """Nonzero entries of a (complex) matrix as row, col, re, im."""
    r, c = np.nonzero(matrix)
    rows = [
        {"row": i, "col": j, "re": matrix[i, j].real, "im": matrix[i, j].imag}
        for i, j in zip(r.tolist(), c.tolist())
    ]
    return write_rows(path, rows, ["row", "col", "re", "im"])


def write_summary(path, summary: Mapping) -> Path:
    """Single-row CSV."""
    return write_rows(path, [dict(summary)])
