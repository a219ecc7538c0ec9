"""Minimal deterministic SVG line/marker plots."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d68910", "#555555"]

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 78, 20, 36, 56


@dataclass
class Curve:
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    color: str | None = None
    markers: bool = False  # draw points instead of a line
    dashed: bool = False


def _num(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-2:
        return f"{v:.0e}".replace("e+0", "e").replace("e-0", "e-")
    return f"{v:g}"


def _linear_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    span = hi - lo
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * span:
        ticks.append(0.0 if abs(v) < 1e-12 * span else v)
        v += step
    return ticks


def _range(values: list[np.ndarray], log: bool) -> tuple[float, float]:
    vals = np.concatenate([v[np.isfinite(v)] for v in values]) if values else np.array([])
    if log:
        vals = vals[vals > 0]
    if vals.size == 0:
        return (1.0, 10.0) if log else (0.0, 1.0)
    lo, hi = float(vals.min()), float(vals.max())
    if log:
        lo, hi = 10 ** math.floor(math.log10(lo)), 10 ** math.ceil(math.log10(hi))
        if lo == hi:
            hi = lo * 10
        return lo, hi
    if lo == hi:
        lo, hi = lo - 1, hi + 1
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_plot(path: str | Path, curves: list[Curve], title: str = "", xlabel: str = "",
              ylabel: str = "", logx: bool = False, logy: bool = False,
              y_floor_decades: int | None = 8) -> None:
    """Write ``curves`` to a static SVG with axes, ticks and a legend."""
    xs = [np.asarray(c.x, float) for c in curves]
    ys = [np.asarray(c.y, float) for c in curves]
    x0, x1 = _range(xs, logx)
    y0, y1 = _range(ys, logy)
    if logy and y_floor_decades is not None:
        y0 = max(y0, y1 / 10**y_floor_decades)

    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def tx(v):
        v = np.asarray(v, float)
        if logx:
            return LEFT + (np.log10(v) - math.log10(x0)) / (math.log10(x1) - math.log10(x0)) * pw
        return LEFT + (v - x0) / (x1 - x0) * pw

    def ty(v):
        v = np.asarray(v, float)
        if logy:
            return TOP + ph - (np.log10(v) - math.log10(y0)) / (math.log10(y1) - math.log10(y0)) * ph
        return TOP + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']

    if logx:
        xt = [10.0**k for k in range(round(math.log10(x0)), round(math.log10(x1)) + 1)]
    else:
        xt = _linear_ticks(x0, x1)
    if logy:
        yt = [10.0**k for k in range(math.ceil(math.log10(y0)), round(math.log10(y1)) + 1)]
    else:
        yt = _linear_ticks(y0, y1)
    for v in xt:
        px = float(tx(v))
        out.append(f'<line x1="{_num(px)}" y1="{TOP + ph}" x2="{_num(px)}" y2="{TOP}" stroke="#e5e5e5"/>')
        out.append(f'<text x="{_num(px)}" y="{TOP + ph + 16}" text-anchor="middle">{_tick_label(v)}</text>')
    for v in yt:
        py = float(ty(v))
        out.append(f'<line x1="{LEFT}" y1="{_num(py)}" x2="{LEFT + pw}" y2="{_num(py)}" stroke="#e5e5e5"/>')
        out.append(f'<text x="{LEFT - 6}" y="{_num(py + 4)}" text-anchor="end">{_tick_label(v)}</text>')

    out.append(f'<text x="{W / 2}" y="{TOP - 14}" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(f'<text x="{LEFT + pw / 2}" y="{H - 14}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2})">{escape(ylabel)}</text>')

    out.append(f'<clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></clipPath>')
    for i, (c, x, y) in enumerate(zip(curves, xs, ys)):
        color = c.color or PALETTE[i % len(PALETTE)]
        ok = np.isfinite(x) & np.isfinite(y)
        if logx:
            ok &= x > 0
        if logy:
            ok &= y >= y0
        px, py = tx(x[ok]), ty(y[ok])
        if c.markers:
            dots = "".join(f'<circle cx="{_num(a)}" cy="{_num(b)}" r="2.2"/>' for a, b in zip(px, py))
            out.append(f'<g fill="none" stroke="{color}" clip-path="url(#plot)">{dots}</g>')
        elif px.size:
            pts = " ".join(f"{_num(a)},{_num(b)}" for a, b in zip(px, py))
            dash = ' stroke-dasharray="5,3"' if c.dashed else ""
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"'
                       f'{dash} clip-path="url(#plot)"/>')
        if c.label:
            ly = TOP + 14 + 15 * i
            lx = LEFT + pw - 150
            if c.markers:
                out.append(f'<circle cx="{lx + 10}" cy="{ly - 4}" r="2.5" fill="none" stroke="{color}"/>')
            else:
                out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{lx + 26}" y="{ly}">{escape(c.label)}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
