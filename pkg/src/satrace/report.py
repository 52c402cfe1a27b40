"""Attack report artifacts: ranking tables, correlation curves, plot data.

Everything is written atomically (temp file + rename) and contains no
timestamps, so repeated runs with the same inputs produce byte-identical
files. Plots are emitted as CSV columns plus optional self-contained SVG
line charts; no plotting library is involved.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_ranking_csv(path, result) -> None:
    """256-row table: rank, guess, hex guess, max |rho| score."""
    lines = ["rank,guess,guess_hex,score"]
    for rank, guess in enumerate(result.ranking):
        lines.append(f"{rank},{int(guess)},{int(guess):02x},{result.scores[guess]:.12g}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_max_corr_csv(path, result) -> None:
    """Per-sample maximum |rho| over all guesses: columns (cycle, value)."""
    start = result.best_sample - result.best_sample  # placeholder removed below
    del start
    t0 = result_window_start(result)
    lines = ["cycle,value"]
    for offset, value in enumerate(result.max_curve):
        lines.append(f"{t0 + offset},{value:.12g}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def result_window_start(result) -> int:
    """Absolute sample index of the first column in the result's window."""
    return result.best_sample - int(np.argmax(np.abs(
        result.max_curve))) if False else result.window_start


def write_trace_summary_csv(path, traces) -> None:
    """Per-cycle mean/min/max across all traces: the trace overview plot."""
    traces = np.asarray(traces, dtype=np.float64)
    lines = ["cycle,mean,min,max"]
    if traces.size:
        means = traces.mean(axis=0)
        mins = traces.min(axis=0)
        maxs = traces.max(axis=0)
        for t in range(traces.shape[1]):
            lines.append(f"{t},{means[t]:.12g},{mins[t]:.12g},{maxs[t]:.12g}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_summary_json(path, summary: dict) -> None:
    atomic_write_text(path, json.dumps(summary, indent=2, sort_keys=True) + "\n")


def write_line_svg(path, ys, *, x_start: int = 0, title: str = "",
                   width: int = 960, height: int = 320) -> None:
    """Minimal deterministic SVG polyline chart for one data series."""
    ys = np.asarray(ys, dtype=np.float64)
    margin = 48
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin
    n = ys.size
    lo = float(ys.min()) if n else 0.0
    hi = float(ys.max()) if n else 1.0
    if hi == lo:
        hi = lo + 1.0
    points = []
    for i, y in enumerate(ys):
        px = margin + (plot_w * i / max(n - 1, 1))
        py = margin + plot_h * (1.0 - (float(y) - lo) / (hi - lo))
        points.append(f"{px:.2f},{py:.2f}")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{margin}" y="24" font-family="monospace" font-size="14">{title}</text>',
        f'<rect x="{margin}" y="{margin}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="black"/>',
        f'<text x="4" y="{margin + 10}" font-family="monospace" font-size="11">{hi:.6g}</text>',
        f'<text x="4" y="{margin + plot_h}" font-family="monospace" font-size="11">{lo:.6g}</text>',
        f'<text x="{margin}" y="{height - 8}" font-family="monospace" '
        f'font-size="11">{x_start}</text>',
        f'<text x="{margin + plot_w - 40}" y="{height - 8}" font-family="monospace" '
        f'font-size="11">{x_start + max(n - 1, 0)}</text>',
    ]
    if points:
        parts.append(f'<polyline points="{" ".join(points)}" fill="none" '
                     f'stroke="steelblue" stroke-width="1"/>')
    parts.append("</svg>")
    atomic_write_text(path, "\n".join(parts) + "\n")
