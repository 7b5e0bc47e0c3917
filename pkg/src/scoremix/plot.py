"""Dependency-free SVG rendering of sample batches.

Scatter plots for 2-D point samples, grayscale cell grids for blob
scenes. Output is plain SVG text, which keeps review diffs readable.
"""

from __future__ import annotations

import numpy as np


def svg_scatter(samples: np.ndarray, extent: float | None = None, size: int = 480) -> str:
    """Scatter of (n, 2) samples over the symmetric square [-extent, extent]²."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] == 0:
        raise ValueError("nothing to plot: empty sample set")
    if samples.shape[1] != 2:
        raise ValueError(f"scatter needs 2-D samples, got dimension {samples.shape[1]}")
    if extent is None:
        extent = float(np.ceil(np.abs(samples).max() * 1.1 * 10) / 10) or 1.0

    def sx(v: float) -> float:
        return (v + extent) / (2 * extent) * size

    def sy(v: float) -> float:
        return size - (v + extent) / (2 * extent) * size

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<line x1="0" y1="{size / 2}" x2="{size}" y2="{size / 2}" stroke="#ddd"/>',
        f'<line x1="{size / 2}" y1="0" x2="{size / 2}" y2="{size}" stroke="#ddd"/>',
    ]
    for x, y in samples:
        if -extent <= x <= extent and -extent <= y <= extent:
            parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="1.5" fill="#1f5fbf" fill-opacity="0.45"/>')
    parts.append(f'<text x="4" y="14" font-size="11" fill="#666">extent ±{extent}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def svg_blob_grid(samples: np.ndarray, grid_h: int, grid_w: int, max_scenes: int = 16, cell: int = 10) -> str:
    """Grid of up to ``max_scenes`` blob scenes, each an h×w field of gray cells.

    Sample values are expected in [-1, 1] and are mapped back to [0, 1]
    intensities for display.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] == 0:
        raise ValueError("nothing to plot: empty sample set")
    if samples.shape[1] != grid_h * grid_w:
        raise ValueError(f"samples have dimension {samples.shape[1]}, grid needs {grid_h * grid_w}")
    shown = samples[:max_scenes]
    cols = int(np.ceil(np.sqrt(len(shown))))
    rows = int(np.ceil(len(shown) / cols))
    pad = 4
    tile_w = grid_w * cell + pad
    tile_h = grid_h * cell + pad
    width = cols * tile_w + pad
    height = rows * tile_h + pad

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#f4f4f4"/>',
    ]
    for idx, scene in enumerate(shown):
        ox = pad + (idx % cols) * tile_w
        oy = pad + (idx // cols) * tile_h
        img = scene.reshape(grid_h, grid_w)
        for r in range(grid_h):
            for c in range(grid_w):
                level = int(round(np.clip((img[r, c] + 1.0) / 2.0, 0.0, 1.0) * 255))
                # row 0 holds the lowest y coordinate; draw it at the bottom
                y = oy + (grid_h - 1 - r) * cell
                parts.append(
                    f'<rect x="{ox + c * cell}" y="{y}" width="{cell}" height="{cell}" '
                    f'fill="rgb({level},{level},{level})"/>'
                )
    parts.append("</svg>")
    return "\n".join(parts)
