"""Minimal log-log line charts written directly as SVG."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _decades(lo: float, hi: float):
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def loglog_svg(series: dict, title: str = "", xlabel: str = "T", ylabel: str = "error",
               width: int = 640, height: int = 420) -> str:
    """Render ``{label: [(x, y), ...]}`` on log-scaled axes.

    Points with non-positive or non-finite coordinates are dropped.
    """
    clean = {}
    for label, pts in series.items():
        kept = [(math.log10(x), math.log10(y)) for x, y in pts
                if x > 0 and y > 0 and math.isfinite(x) and math.isfinite(y)]
        if kept:
            clean[label] = sorted(kept)

    left, right, top, bottom = 70, 170, 40, 50
    pw, ph = width - left - right, height - top - bottom
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>')

    if clean:
        xs = [p[0] for pts in clean.values() for p in pts]
        ys = [p[1] for pts in clean.values() for p in pts]
        x0, x1 = math.floor(min(xs)), math.ceil(max(xs))
        y0, y1 = math.floor(min(ys)), math.ceil(max(ys))
        x1 = max(x1, x0 + 1)
        y1 = max(y1, y0 + 1)

        def px(v):
            return left + (v - x0) / (x1 - x0) * pw

        def py(v):
            return top + (y1 - v) / (y1 - y0) * ph

        for e in _decades(x0, x1):
            out.append(f'<line x1="{px(e):.2f}" y1="{top}" x2="{px(e):.2f}" y2="{top + ph}" stroke="#ddd"/>')
            out.append(f'<text x="{px(e):.2f}" y="{top + ph + 16}" text-anchor="middle">1e{e}</text>')
        for e in _decades(y0, y1):
            out.append(f'<line x1="{left}" y1="{py(e):.2f}" x2="{left + pw}" y2="{py(e):.2f}" stroke="#ddd"/>')
            out.append(f'<text x="{left - 6}" y="{py(e) + 4:.2f}" text-anchor="end">1e{e}</text>')

        for k, (label, pts) in enumerate(clean.items()):
            color = PALETTE[k % len(PALETTE)]
            path = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            for x, y in pts:
                out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="2.5" fill="{color}"/>')
            ly = top + 14 + 16 * k
            out.append(f'<line x1="{left + pw + 12}" y1="{ly - 4}" x2="{left + pw + 30}" y2="{ly - 4}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{left + pw + 34}" y="{ly}">{escape(label)}</text>')

    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
