"""Minimal deterministic SVG plots: points with error bars and a fitted line.

Axes are logarithmic in y and, for log-log fits, in x.  The output depends
only on the inputs (fixed number formatting, no timestamps).
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

W, H = 480, 360
LEFT, RIGHT, TOP, BOTTOM = 64, 16, 32, 48


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, log: bool):
    if log:
        a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
        return [10.0**k for k in range(a, b + 1)]
    step = 10 ** math.floor(math.log10(max(hi - lo, 1e-12)))
    if (hi - lo) / step < 3:
        step /= 2
    start = math.floor(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step) + 2)]


def plot_fit(x, y, lo=None, hi=None, line=None, logx: bool = True, title: str = "",
             xlabel: str = "scale", ylabel: str = "estimate") -> str:
    """Return an SVG document.

    ``lo``/``hi`` are error-bar ends (same units as ``y``); ``line`` is a
    callable mapping x to the fitted y.  Non-positive y values are skipped.
    """
    pts = [(float(a), float(b), None if lo is None else float(lo[i]),
            None if hi is None else float(hi[i]))
           for i, (a, b) in enumerate(zip(x, y)) if b > 0 and (not logx or a > 0)]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W // 2}" y="20" text-anchor="middle" font-size="13">'
           f'{escape(title)}</text>']
    if not pts:
        out.append(f'<text x="{W // 2}" y="{H // 2}" text-anchor="middle">no data</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts] + [p[2] for p in pts if p[2] and p[2] > 0] + \
         [p[3] for p in pts if p[3] and p[3] > 0]
    fx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    fy = math.log10
    x0, x1 = fx(min(xs)), fx(max(xs))
    y0, y1 = fy(min(ys)), fy(max(ys))
    padx = 0.05 * (x1 - x0 or 1.0)
    pady = 0.05 * (y1 - y0 or 1.0)
    x0, x1, y0, y1 = x0 - padx, x1 + padx, y0 - pady, y1 + pady

    def X(v):
        return LEFT + (fx(v) - x0) / (x1 - x0) * (W - LEFT - RIGHT)

    def Y(v):
        return H - BOTTOM - (fy(v) - y0) / (y1 - y0) * (H - TOP - BOTTOM)

    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{W - LEFT - RIGHT}" '
               f'height="{H - TOP - BOTTOM}" fill="none" stroke="black"/>')
    xt = _ticks(min(xs), max(xs), logx)
    for t in xt:
        if (logx and t <= 0) or not x0 <= fx(t) <= x1:
            continue
        out.append(f'<text x="{_fmt(X(t))}" y="{H - BOTTOM + 16}" text-anchor="middle" '
                   f'font-size="10">{t:g}</text>')
    for t in _ticks(10**y0, 10**y1, True):
        if y0 <= fy(t) <= y1:
            out.append(f'<text x="{LEFT - 4}" y="{_fmt(Y(t) + 3)}" text-anchor="end" '
                       f'font-size="10">{t:g}</text>')
    out.append(f'<text x="{W // 2}" y="{H - 8}" text-anchor="middle" font-size="11">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{H // 2}" text-anchor="middle" font-size="11" '
               f'transform="rotate(-90 14 {H // 2})">{escape(ylabel)}</text>')
    if line is not None:
        a, b = min(xs), max(xs)
        n = 24
        seg = []
        for k in range(n + 1):
            v = a + (b - a) * k / n if not logx else a * (b / a) ** (k / n)
            w = line(v)
            if w > 0 and y0 <= fy(w) <= y1:
                seg.append(f"{_fmt(X(v))},{_fmt(Y(w))}")
        if len(seg) > 1:
            out.append(f'<polyline points="{" ".join(seg)}" fill="none" stroke="#c03030"/>')
    for a, b, l, h in pts:
        if l is not None and h is not None and l > 0:
            out.append(f'<line x1="{_fmt(X(a))}" y1="{_fmt(Y(l))}" x2="{_fmt(X(a))}" '
                       f'y2="{_fmt(Y(h))}" stroke="#3050a0"/>')
        out.append(f'<circle cx="{_fmt(X(a))}" cy="{_fmt(Y(b))}" r="3" fill="#3050a0"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
