"""Minimal self-contained SVG line plots (linear or log-log axes)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


@dataclass
class Series:
    x: Sequence[float]
    y: Sequence[float]
    label: str
    dashed: bool = False
    markers: bool = True


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _fmt_tick(v: float, log: bool) -> str:
    if log:
        return f"1e{int(round(v))}"
    return f"{v:.6g}"


def line_plot(
    series: Sequence[Series],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    loglog: bool = False,
    width: int = 640,
    height: int = 440,
) -> str:
    """Render series as an SVG document string. Non-finite or (log) non-positive points are skipped."""

    def tx(v):
        return math.log10(v) if loglog else v

    pts = []
    for s in series:
        keep = [
            (tx(a), tx(b))
            for a, b in zip(s.x, s.y)
            if a is not None and b is not None and math.isfinite(a) and math.isfinite(b)
            and (not loglog or (a > 0 and b > 0))
        ]
        pts.append(keep)
    xs = [p[0] for ps in pts for p in ps] or [0.0, 1.0]
    ys = [p[1] for ps in pts for p in ps] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if loglog:
        x0, x1 = math.floor(x0), math.ceil(x1)
        y0, y1 = math.floor(y0), math.ceil(y1)
    pad_y = 0.05 * (y1 - y0) if not loglog else 0.0
    y0, y1 = y0 - pad_y, y1 + pad_y
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    left, right, top, bottom = 78, 170, 36, 52
    pw, ph = width - left - right, height - top - bottom

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + (1 - (v - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    xt = list(range(int(x0), int(x1) + 1)) if loglog else _nice_ticks(x0, x1)
    yt = list(range(int(y0), int(y1) + 1)) if loglog else _nice_ticks(y0, y1)
    for t in xt:
        X = px(t)
        out.append(f'<line x1="{X:.2f}" y1="{top}" x2="{X:.2f}" y2="{top + ph}" stroke="#ddd"/>')
        out.append(f'<text x="{X:.2f}" y="{top + ph + 16}" text-anchor="middle">{_fmt_tick(t, loglog)}</text>')
    for t in yt:
        Y = py(t)
        out.append(f'<line x1="{left}" y1="{Y:.2f}" x2="{left + pw}" y2="{Y:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{Y + 4:.2f}" text-anchor="end">{_fmt_tick(t, loglog)}</text>')
    if title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(
            f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>'
        )
    for k, (s, ps) in enumerate(zip(series, pts)):
        colour = PALETTE[k % len(PALETTE)]
        dash = ' stroke-dasharray="6 4"' if s.dashed else ""
        if ps:
            path = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in ps)
            out.append(f'<polyline points="{path}" fill="none" stroke="{colour}" stroke-width="1.6"{dash}/>')
            if s.markers:
                out += [f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="2.5" fill="{colour}"/>' for a, b in ps]
        ly = top + 14 + 16 * k
        lx = left + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" stroke="{colour}" stroke-width="1.6"{dash}/>')
        out.append(f'<text x="{lx + 28}" y="{ly}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
