"""Minimal deterministic SVG plots (polylines, axes, ticks, legend)."""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=72, right=24, top=36, bottom=52)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _tick_label(x: float) -> str:
    if x == 0:
        return "0"
    if abs(x) >= 1e4 or abs(x) < 1e-3:
        return f"{x:.1e}"
    return f"{x:.4g}"


def nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        hi = lo + (abs(lo) if lo else 1.0)
    raw = (hi - lo) / count
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t / step) * step)
        t += step
    return ticks


class Canvas:
    def __init__(self, title: str, xlabel: str, ylabel: str, xlim, ylim, logy: bool = False, equal: bool = False):
        self.items: list[str] = []
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.logy = logy
        x0, x1 = xlim
        y0, y1 = ylim
        if x1 <= x0:
            x1 = x0 + 1.0
        if y1 <= y0:
            pad = abs(y0) * 0.05 or 1.0
            y0, y1 = y0 - pad, y1 + pad
        self.pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
        if equal:
            # same scale on both axes, centred
            sx = self.pw / (x1 - x0)
            sy = self.ph / (y1 - y0)
            s = min(sx, sy)
            cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            x0, x1 = cx - self.pw / s / 2, cx + self.pw / s / 2
            y0, y1 = cy - self.ph / s / 2, cy + self.ph / s / 2
        self.xlim, self.ylim = (x0, x1), (y0, y1)

    def px(self, x):
        x0, x1 = self.xlim
        return MARGIN["left"] + (np.asarray(x) - x0) / (x1 - x0) * self.pw

    def py(self, y):
        y0, y1 = self.ylim
        return MARGIN["top"] + (1.0 - (np.asarray(y) - y0) / (y1 - y0)) * self.ph

    def polyline(self, x, y, color, width=1.5, closed=False):
        x, y = np.asarray(x, float), np.asarray(y, float)
        ok = np.isfinite(x) & np.isfinite(y)
        if ok.sum() < 2:
            return
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(self.px(x[ok]), self.py(y[ok])))
        tag = "polygon" if closed else "polyline"
        self.items.append(f'<{tag} points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>')

    def _axes(self):
        out = []
        L, T = MARGIN["left"], MARGIN["top"]
        out.append(f'<rect x="{L}" y="{T}" width="{self.pw}" height="{self.ph}" fill="none" stroke="#000"/>')
        for t in nice_ticks(*self.xlim):
            X = _fmt(float(self.px(t)))
            out.append(f'<line x1="{X}" y1="{T + self.ph}" x2="{X}" y2="{T + self.ph + 5}" stroke="#000"/>')
            out.append(f'<text x="{X}" y="{T + self.ph + 18}" text-anchor="middle">{_tick_label(t)}</text>')
        for t in nice_ticks(*self.ylim):
            Y = _fmt(float(self.py(t)))
            lab = _tick_label(10.0**t) if self.logy else _tick_label(t)
            out.append(f'<line x1="{L - 5}" y1="{Y}" x2="{L}" y2="{Y}" stroke="#000"/>')
            out.append(f'<text x="{L - 8}" y="{Y}" text-anchor="end" dominant-baseline="middle">{lab}</text>')
        out.append(f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="15">{escape(self.title)}</text>')
        out.append(f'<text x="{L + self.pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(self.xlabel)}</text>')
        ylab = self.ylabel + (" (log10)" if self.logy else "")
        out.append(
            f'<text x="16" y="{T + self.ph / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {T + self.ph / 2:.1f})">{escape(ylab)}</text>'
        )
        return out

    def legend(self, labels, colors):
        L, T = MARGIN["left"], MARGIN["top"]
        for k, (lab, col) in enumerate(zip(labels, colors)):
            y = T + 14 + 16 * k
            self.items.append(f'<line x1="{L + 10}" y1="{y}" x2="{L + 30}" y2="{y}" stroke="{col}" stroke-width="2"/>')
            self.items.append(f'<text x="{L + 36}" y="{y}" dominant-baseline="middle">{escape(lab)}</text>')

    def render(self) -> str:
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">'
        )
        body = ['<rect width="100%" height="100%" fill="#fff"/>'] + self._axes() + self.items
        return "\n".join([head, *body, "</svg>"]) + "\n"


def _limits(arrays):
    vals = np.concatenate([np.asarray(a, float).ravel() for a in arrays]) if arrays else np.array([0.0, 1.0])
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return 0.0, 1.0
    lo, hi = float(vals.min()), float(vals.max())
    pad = 0.05 * (hi - lo) if hi > lo else (0.05 * abs(hi) or 1.0)
    return lo - pad, hi + pad


def line_plot(series, title, xlabel, ylabel, logy=False) -> str:
    """``series``: list of (label, x, y)."""
    xs = [np.asarray(x, float) for _, x, _ in series]
    ys = []
    for _, _, y in series:
        y = np.asarray(y, float)
        if logy:
            with np.errstate(divide="ignore", invalid="ignore"):
                y = np.where(y > 0, np.log10(np.where(y > 0, y, 1.0)), np.nan)
        ys.append(y)
    cv = Canvas(title, xlabel, ylabel, _limits(xs), _limits(ys), logy=logy)
    colors = [PALETTE[k % len(PALETTE)] for k in range(len(series))]
    for x, y, c in zip(xs, ys, colors):
        cv.polyline(x, y, c)
    if len(series) > 1:
        cv.legend([s[0] for s in series], colors)
    return cv.render()


def outline_plot(curves, title) -> str:
    """``curves``: list of (label, points (M, 2)); drawn closed with equal axes."""
    pts = [np.asarray(p, float) for _, p in curves]
    xl = _limits([p[:, 0] for p in pts] + [np.zeros(1)])
    yl = _limits([p[:, 1] for p in pts] + [np.zeros(1)])
    cv = Canvas(title, "x", "y", xl, yl, equal=True)
    n = len(curves)
    colors = [PALETTE[k % len(PALETTE)] for k in range(n)]
    for p, c in zip(pts, colors):
        cv.polyline(p[:, 0], p[:, 1], c, width=1.2, closed=True)
    ox, oy = float(cv.px(0.0)), float(cv.py(0.0))
    cv.items.append(f'<circle cx="{_fmt(ox)}" cy="{_fmt(oy)}" r="2.5" fill="#000"/>')
    if n <= 8:
        cv.legend([c[0] for c in curves], colors)
    return cv.render()


def write_svg(text: str, path) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path
