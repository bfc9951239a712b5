"""Minimal SVG renderings of layouts and s21 responses (no plotting dependency)."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .circuit import DEFAULT_BOUNDS, Layout, ParamBounds, _perimeter_point
from .surrogate import SParams

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _svg(width: int, height: int, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def layout_svg(layout: Layout, bounds: ParamBounds = DEFAULT_BOUNDS, title: str | None = None,
               size: int = 480) -> str:
    """Top view: each resonator is a square ring of side ``l`` and trace width ``w``; the white notch marks the gap."""
    (x0, x1), (y0, y1) = bounds.x, bounds.y
    pad = 30
    scale = (size - 2 * pad) / max(x1 - x0, y1 - y0)

    def px(x, y):
        return pad + (x - x0) * scale, size - pad - (y - y0) * scale

    body = []
    ax, ay = px(x0, y1)
    body.append(f'<rect x="{ax:.2f}" y="{ay:.2f}" width="{(x1 - x0) * scale:.2f}" '
                f'height="{(y1 - y0) * scale:.2f}" fill="none" stroke="#bbb" stroke-dasharray="4 3"/>')
    for i, r in enumerate(layout.resonators):
        color = PALETTE[i % len(PALETTE)]
        cx, cy = px(r.x - r.l / 2, r.y + r.l / 2)
        side = r.l * scale
        body.append(f'<rect x="{cx:.2f}" y="{cy:.2f}" width="{side:.2f}" height="{side:.2f}" fill="none" '
                    f'stroke="{color}" stroke-width="{max(r.w * scale, 1.0):.2f}"/>')
        gx, gy = px(*_perimeter_point(r.x, r.y, r.l, r.u))
        g = max(r.gap_w * scale, 2.0)
        body.append(f'<rect x="{gx - g / 2:.2f}" y="{gy - g / 2:.2f}" width="{g:.2f}" height="{g:.2f}" fill="white"/>')
        tx, ty = px(r.x, r.y)
        body.append(f'<text x="{tx:.2f}" y="{ty + 4:.2f}" text-anchor="middle" fill="{color}">{i}</text>')
    if title:
        body.append(f'<text x="{size / 2:.1f}" y="18" text-anchor="middle">{escape(title)}</text>')
    return _svg(size, size, body)


def s21_svg(curves: Sequence[tuple[str, SParams]], bands: Sequence[tuple[float, float]] = (),
            title: str | None = None, floor_db: float = -60.0, threshold_db: float = -6.0,
            width: int = 640, height: int = 360) -> str:
    """|s21| in dB against frequency; target bands shaded, passband threshold dashed."""
    if not curves:
        raise ValueError("need at least one curve")
    freqs = curves[0][1].freqs
    f0, f1 = float(freqs[0]), float(freqs[-1])
    left, right, top, bottom = 56, 16, 28, 40
    pw, ph = width - left - right, height - top - bottom

    def px(f, db):
        db = min(max(db, floor_db), 0.0)
        return left + (f - f0) / (f1 - f0) * pw, top + (0.0 - db) / (0.0 - floor_db) * ph

    body = []
    for lo, hi in bands:
        a, _ = px(lo, 0)
        b, _ = px(hi, 0)
        body.append(f'<rect x="{a:.2f}" y="{top}" width="{b - a:.2f}" height="{ph}" fill="#f6d55c" opacity="0.45"/>')
    body.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for db in np.arange(0.0, floor_db - 1e-9, -10.0):
        _, y = px(f0, db)
        body.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        body.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">{db:g}</text>')
    for f in np.linspace(f0, f1, 5):
        x, _ = px(f, 0)
        body.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 4}" stroke="black"/>')
        body.append(f'<text x="{x:.2f}" y="{top + ph + 16}" text-anchor="middle">{f:g}</text>')
    _, yt = px(f0, threshold_db)
    body.append(f'<line x1="{left}" y1="{yt:.2f}" x2="{left + pw}" y2="{yt:.2f}" stroke="#888" stroke-dasharray="5 4"/>')
    for k, (label, s) in enumerate(curves):
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in (px(f, d) for f, d in zip(s.freqs, s.s21_db)))
        color = PALETTE[k % len(PALETTE)]
        body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        body.append(f'<text x="{left + pw - 4}" y="{top + 14 + 14 * k}" text-anchor="end" fill="{color}">'
                    f'{escape(label)}</text>')
    body.append(f'<text x="{left + pw / 2:.1f}" y="{height - 6}" text-anchor="middle">frequency (GHz)</text>')
    body.append(f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" '
                f'transform="rotate(-90 14 {top + ph / 2:.1f})">s21 (dB)</text>')
    if title:
        body.append(f'<text x="{width / 2:.1f}" y="18" text-anchor="middle">{escape(title)}</text>')
    return _svg(width, height, body)


def cdf_svg(values: Sequence[float], label: str, width: int = 480, height: int = 320) -> str:
    """Empirical CDF step plot."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("no values")
    left, right, top, bottom = 48, 16, 20, 40
    pw, ph = width - left - right, height - top - bottom
    lo, hi = float(v[0]), float(v[-1])
    span = hi - lo if hi > lo else 1.0

    def px(x, c):
        return left + (x - lo) / span * pw, top + (1.0 - c) * ph

    pts, prev = [], 0.0
    for k, x in enumerate(v, start=1):
        pts.append(px(x, prev))
        prev = k / v.size
        pts.append(px(x, prev))
    body = [f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
            '<polyline points="' + " ".join(f"{a:.2f},{b:.2f}" for a, b in pts) + '" fill="none" stroke="#1f77b4"/>',
            f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{escape(label)}</text>']
    return _svg(width, height, body)
