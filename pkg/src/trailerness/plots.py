"""Tiny dependency-free timeline renderers (ASCII and SVG)."""

from __future__ import annotations

import numpy as np

_BLOCKS = " .:-=+*#%@"


def _downsample_mean(values: np.ndarray, width: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    edges = np.linspace(0, values.size, width + 1).astype(int)
    return np.array([values[a:b].mean() if b > a else 0.0 for a, b in zip(edges[:-1], edges[1:])])


def ascii_timeline(scores, labels, width: int = 100) -> str:
    """Two-row chart: score intensity on top, editor label band below."""
    width = min(width, len(np.asarray(scores).reshape(-1)))
    s = _downsample_mean(scores, width)
    y = _downsample_mean(labels, width)
    score_row = "".join(_BLOCKS[min(int(v * len(_BLOCKS)), len(_BLOCKS) - 1)] for v in s)
    label_row = "".join("#" if v >= 0.5 else ("-" if v > 0 else " ") for v in y)
    return f"scores |{score_row}|\nlabels |{label_row}|\n"


def svg_timeline(scores, labels, width: int = 800, height: int = 120) -> str:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    n = scores.size
    xs = np.linspace(0, width, n)
    band_h = height // 5
    plot_h = height - band_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    # editor label band along the bottom
    runs = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate(([0], runs))
    ends = np.concatenate((runs, [n]))
    for a, b in zip(starts, ends):
        if labels[a]:
            x0, x1 = xs[a], xs[min(b, n - 1)]
            parts.append(
                f'<rect x="{x0:.1f}" y="{plot_h}" width="{max(x1 - x0, 1):.1f}" '
                f'height="{band_h}" fill="#c33"/>'
            )
    pts = " ".join(
        f"{x:.1f},{plot_h - v * (plot_h - 4):.1f}" for x, v in zip(xs, scores)
    )
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#36c" stroke-width="1"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
