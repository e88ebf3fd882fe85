"""SVG heatmaps and line plots, and binary PGM images.

Continuous heatmaps map values linearly onto a five-stop ramp, interpolated
in RGB between these control points (value: colour):

    0.00 #440154   0.25 #3b528b   0.50 #21918c   0.75 #5ec962   1.00 #fde725

Categorical maps (``categorical=True``) use ``CATEGORY_COLORS`` by index.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from ..errors import ParameterError

RAMP = [(0.00, (0x44, 0x01, 0x54)), (0.25, (0x3B, 0x52, 0x8B)), (0.50, (0x21, 0x91, 0x8C)),
        (0.75, (0x5E, 0xC9, 0x62)), (1.00, (0xFD, 0xE7, 0x25))]
CATEGORY_COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                   "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def ramp_color(t: float) -> str:
    t = min(max(float(t), 0.0), 1.0)
    for (t0, c0), (t1, c1) in zip(RAMP, RAMP[1:]):
        if t <= t1:
            f = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            rgb = [round(a + (b - a) * f) for a, b in zip(c0, c1)]
            return "#%02x%02x%02x" % tuple(rgb)
    return "#%02x%02x%02x" % RAMP[-1][1]


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{what} contains NaN or infinite values")


def write_svg_heatmap(field, path, cell: int = 4, vmin: float | None = None,
                      vmax: float | None = None, categorical: bool = False,
                      flip_y: bool = True, title: str | None = None) -> Path:
    """Render a 2D array as one ``<rect>`` per cell.

    With ``flip_y`` row 0 is drawn at the bottom, matching a grid whose
    first row is the smallest y.
    """
    f = np.asarray(field, dtype=np.float64)
    if f.ndim != 2:
        raise ParameterError("heatmap field must be 2-D")
    _check_finite(f, "heatmap field")
    ny, nx = f.shape
    lo = float(f.min()) if vmin is None else vmin
    hi = float(f.max()) if vmax is None else vmax
    span = hi - lo
    top = 20 if title else 0
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
             f'width="{nx * cell}" height="{ny * cell + top}">']
    if title:
        parts.append(f'<text x="2" y="14" font-size="12">{escape(title)}</text>')
    for i in range(ny):
        y = top + ((ny - 1 - i) if flip_y else i) * cell
        for j in range(nx):
            v = f[i, j]
            if categorical:
                color = CATEGORY_COLORS[int(v) % len(CATEGORY_COLORS)]
            else:
                color = ramp_color((v - lo) / span if span > 0 else 0.0)
            parts.append(f'<rect x="{j * cell}" y="{y}" width="{cell}" height="{cell}" '
                         f'fill="{color}"/>')
    parts.append("</svg>")
    return _write(path, "\n".join(parts) + "\n")


def write_svg_curves(series, path, title: str = "", xlabel: str = "", ylabel: str = "",
                     xlim: tuple[float, float] | None = None,
                     ylim: tuple[float, float] | None = None,
                     width: int = 480, height: int = 360) -> Path:
    """Line plot of ``series``: a mapping ``label -> (xs, ys)`` or ``(xs, ys, yerr)``."""
    items = list(series.items())
    for label, s in items:
        for arr in s:
            _check_finite(np.asarray(arr, dtype=np.float64), f"series {label!r}")
    allx = np.concatenate([np.asarray(s[0], dtype=float) for _, s in items]) if items else np.zeros(1)
    ally = np.concatenate([np.asarray(s[1], dtype=float) for _, s in items]) if items else np.zeros(1)
    x0, x1 = xlim or (float(allx.min()), float(allx.max()))
    y0, y1 = ylim or (float(ally.min()), float(ally.max()))
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0
    ml, mr, mt, mb = 50, 110, 30, 40
    pw, ph = width - ml - mr, height - mt - mb

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
             f'width="{width}" height="{height}">',
             f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
             f'<text x="{ml}" y="18" font-size="13">{escape(title)}</text>',
             f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" font-size="12" '
             f'text-anchor="middle">{escape(xlabel)}</text>',
             f'<text x="14" y="{mt + ph / 2:.1f}" font-size="12" text-anchor="middle" '
             f'transform="rotate(-90 14 {mt + ph / 2:.1f})">{escape(ylabel)}</text>']
    for t in np.linspace(0, 1, 6):
        xv, yv = x0 + t * (x1 - x0), y0 + t * (y1 - y0)
        parts.append(f'<text x="{sx(xv):.1f}" y="{mt + ph + 14}" font-size="10" '
                     f'text-anchor="middle">{xv:.2f}</text>')
        parts.append(f'<text x="{ml - 4}" y="{sy(yv) + 3:.1f}" font-size="10" '
                     f'text-anchor="end">{yv:.2f}</text>')
    for n, (label, s) in enumerate(items):
        color = CATEGORY_COLORS[n % len(CATEGORY_COLORS)]
        xs, ys = np.asarray(s[0], dtype=float), np.asarray(s[1], dtype=float)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if len(s) > 2:
            for a, b, e in zip(xs, ys, np.asarray(s[2], dtype=float)):
                parts.append(f'<line x1="{sx(a):.2f}" y1="{sy(b - e):.2f}" x2="{sx(a):.2f}" '
                             f'y2="{sy(b + e):.2f}" stroke="{color}"/>')
        ly = mt + 14 + 16 * n
        parts.append(f'<line x1="{ml + pw + 8}" y1="{ly - 4}" x2="{ml + pw + 24}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{ml + pw + 28}" y="{ly}" font-size="11">{escape(str(label))}</text>')
    parts.append("</svg>")
    return _write(path, "\n".join(parts) + "\n")


def write_pgm(image, path) -> Path:
    """Binary greyscale PGM (P5). Float images are read as [0, 1] intensities."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ParameterError("PGM images must be 2-D")
    if np.issubdtype(img.dtype, np.floating):
        _check_finite(img, "image")
        data = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    else:
        data = np.clip(img, 0, 255).astype(np.uint8)
    h, w = data.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes())
    return path


def _write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
