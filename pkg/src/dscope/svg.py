"""Standalone SVG 1.1 scatter plots and density heatmaps.

Output is plain text with fixed number formatting, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import colorsys
from xml.sax.saxutils import escape

import numpy as np

from .metrics import DensityGrid

SIZE = 800
MARGIN = 0.05
RADIUS = 3.0

# tab10
DEFAULT_PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

# Sequential ramp from white to dark blue; every channel decreases
# monotonically, so darker always means denser.
DENSITY_RAMP = ((255, 255, 255), (198, 219, 239), (107, 174, 214), (33, 113, 181), (8, 48, 107))

_HEAD = (
    '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
    f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE}" '
    f'viewBox="0 0 {SIZE} {SIZE}">\n'
)


def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def no_data_svg() -> str:
    return _HEAD + (
        f'<text x="{SIZE // 2}" y="{SIZE // 2}" text-anchor="middle" font-family="sans-serif" '
        'font-size="24">no data</text>\n</svg>\n'
    )


def label_colors(labels, palette=None) -> dict[int, str]:
    """One color per distinct label, in sorted label order."""
    uniq = sorted({int(l) for l in labels})
    palette = list(palette or DEFAULT_PALETTE)
    if len(uniq) > len(palette):
        extra = len(uniq) - len(palette)
        for i in range(extra):
            r, g, b = colorsys.hsv_to_rgb((i + 0.5) / extra, 0.65, 0.85)
            palette.append(f"#{round(r * 255):02x}{round(g * 255):02x}{round(b * 255):02x}")
    return {l: palette[i] for i, l in enumerate(uniq)}


def _axis(values: np.ndarray) -> tuple[float, float]:
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    if span == 0:
        return lo - 0.5, lo + 0.5
    return lo - MARGIN * span, hi + MARGIN * span


def to_viewport(coords, xr: tuple[float, float], yr: tuple[float, float]) -> np.ndarray:
    c = np.asarray(coords, dtype=np.float64)
    px = (c[:, 0] - xr[0]) / (xr[1] - xr[0]) * SIZE
    py = SIZE - (c[:, 1] - yr[0]) / (yr[1] - yr[0]) * SIZE
    return np.column_stack([px, py])


def render_scatter(coords, labels, palette=None) -> str:
    c = np.asarray(coords, dtype=np.float64).reshape(-1, 2) if len(coords) else np.empty((0, 2))
    if len(c) == 0:
        return no_data_svg()
    if not np.all(np.isfinite(c)):
        raise ValueError("coordinates must be finite")
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != len(c):
        raise ValueError("coords and labels differ in length")
    colors = label_colors(labels, palette)
    pts = to_viewport(c, _axis(c[:, 0]), _axis(c[:, 1]))
    parts = [_HEAD, f'<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="#ffffff"/>\n']
    for (x, y), l in zip(pts, labels):
        parts.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="{_f(RADIUS)}" fill="{colors[int(l)]}"/>\n')
    parts.append("</svg>\n")
    return "".join(parts)


def ramp_color(t: float) -> str:
    """Color for a normalised density t in [0, 1] (piecewise-linear ramp)."""
    t = min(max(float(t), 0.0), 1.0)
    pos = t * (len(DENSITY_RAMP) - 1)
    i = min(int(pos), len(DENSITY_RAMP) - 2)
    w = pos - i
    a, b = DENSITY_RAMP[i], DENSITY_RAMP[i + 1]
    rgb = [round(a[k] + (b[k] - a[k]) * w) for k in range(3)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def render_density(grid: DensityGrid, title: str | None = None) -> str:
    d = np.asarray(grid.density, dtype=np.float64)
    if d.size == 0:
        return no_data_svg()
    g = d.shape[0]
    top = float(d.max())
    norm = d / top if top > 0 else np.zeros_like(d)
    cell = SIZE / g
    parts = [_HEAD]
    if title:
        parts.append(f"<title>{escape(title)}</title>\n")
    for r in range(g):
        # row 0 is the lowest y, drawn at the bottom
        y = SIZE - (r + 1) * cell
        for col in range(g):
            parts.append(
                f'<rect x="{_f(col * cell)}" y="{_f(y)}" width="{_f(cell)}" height="{_f(cell)}" '
                f'fill="{ramp_color(norm[r, col])}"/>\n'
            )
    parts.append("</svg>\n")
    return "".join(parts)
