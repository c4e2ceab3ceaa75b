"""Minimal native SVG plots: (log-log) polyline plots and heatmaps."""
from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .io import atomic_write

WIDTH, HEIGHT = 560, 400
MARGIN = (70, 20, 30, 50)  # left, right, top, bottom
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    dashed: bool = False
    markers: bool = True


def _n(v: float) -> str:
    return f"{v:.2f}"


def _ticks_log(lo: float, hi: float) -> list:
    a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
    if b == a:
        b += 1
    return [10.0**k for k in range(a, b + 1)]


def _ticks_lin(lo: float, hi: float, n: int = 5) -> list:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.floor(lo / step) * step
    out, t = [], start
    while t <= hi + 1e-9 * step:
        out.append(round(t, 12))
        t += step
    return out


def _tick_label(v: float, log: bool) -> str:
    if log:
        return f"1e{int(round(math.log10(v)))}"
    return f"{v:g}"


class _Axes:
    def __init__(self, xs, ys, logx, logy):
        self.logx, self.logy = logx, logy
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        if logx:
            xs = xs[xs > 0]
        if logy:
            ys = ys[ys > 0]
        if len(xs) == 0 or len(ys) == 0:
            raise ValueError("nothing to plot")
        self.xt = _ticks_log(xs.min(), xs.max()) if logx else _ticks_lin(xs.min(), xs.max())
        self.yt = _ticks_log(ys.min(), ys.max()) if logy else _ticks_lin(ys.min(), ys.max())
        self.x0, self.x1 = self._t(self.xt[0], logx), self._t(self.xt[-1], logx)
        self.y0, self.y1 = self._t(self.yt[0], logy), self._t(self.yt[-1], logy)

    @staticmethod
    def _t(v, log):
        return math.log10(v) if log else v

    def px(self, v):
        l, r, _, _ = MARGIN
        return l + (self._t(v, self.logx) - self.x0) / (self.x1 - self.x0) * (WIDTH - l - r)

    def py(self, v):
        _, _, t, b = MARGIN
        return HEIGHT - b - (self._t(v, self.logy) - self.y0) / (self.y1 - self.y0) * (HEIGHT - t - b)


def _frame(ax: _Axes, title, xlabel, ylabel) -> list:
    l, r, t, b = MARGIN
    out = [f'<rect x="{l}" y="{t}" width="{WIDTH - l - r}" height="{HEIGHT - t - b}" '
           'fill="none" stroke="black"/>']
    for v in ax.xt:
        x = _n(ax.px(v))
        out.append(f'<line x1="{x}" y1="{HEIGHT - b}" x2="{x}" y2="{HEIGHT - b + 5}" stroke="black"/>')
        out.append(f'<text x="{x}" y="{HEIGHT - b + 18}" text-anchor="middle">{_tick_label(v, ax.logx)}</text>')
    for v in ax.yt:
        y = _n(ax.py(v))
        out.append(f'<line x1="{l - 5}" y1="{y}" x2="{l}" y2="{y}" stroke="black"/>')
        out.append(f'<text x="{l - 8}" y="{y}" text-anchor="end" dominant-baseline="middle">'
                   f'{_tick_label(v, ax.logy)}</text>')
    out.append(f'<text x="{WIDTH / 2:.1f}" y="{t - 10}" text-anchor="middle">{escape(title)}</text>')
    out.append(f'<text x="{(l + WIDTH - r) / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{(t + HEIGHT - b) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {(t + HEIGHT - b) / 2:.1f})">{escape(ylabel)}</text>')
    return out


def _doc(body: list) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


def line_plot_svg(series, title="", xlabel="", ylabel="", logx=False, logy=False) -> str:
    series = list(series)
    xs = np.concatenate([np.asarray(s.x, float) for s in series])
    ys = np.concatenate([np.asarray(s.y, float) for s in series])
    ok = np.isfinite(xs) & np.isfinite(ys)
    ax = _Axes(xs[ok], ys[ok], logx, logy)
    body = _frame(ax, title, xlabel, ylabel)
    l, _, t, _ = MARGIN
    for k, s in enumerate(series):
        c = COLORS[k % len(COLORS)]
        x, y = np.asarray(s.x, float), np.asarray(s.y, float)
        keep = np.isfinite(x) & np.isfinite(y) & (x > 0 if logx else True) & (y > 0 if logy else True)
        pts = " ".join(f"{_n(ax.px(a))},{_n(ax.py(b))}" for a, b in zip(x[keep], y[keep]))
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        body.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.5"{dash}/>')
        if s.markers:
            for a, b in zip(x[keep], y[keep]):
                body.append(f'<circle cx="{_n(ax.px(a))}" cy="{_n(ax.py(b))}" r="2.5" fill="{c}"/>')
        ly = t + 14 + 14 * k
        body.append(f'<line x1="{l + 10}" y1="{ly}" x2="{l + 30}" y2="{ly}" stroke="{c}" stroke-width="1.5"{dash}/>')
        body.append(f'<text x="{l + 35}" y="{ly}" dominant-baseline="middle">{escape(s.label)}</text>')
    return _doc(body)


def loglog_svg(series, title="", xlabel="", ylabel="") -> str:
    return line_plot_svg(series, title, xlabel, ylabel, logx=True, logy=True)


def heatmap_svg(values, title="", cmap: str = "viridis") -> str:
    """Cell-per-value heatmap; ``values[i, j]`` is drawn at column i, row j (y upward)."""
    from matplotlib import colormaps  # colour table only

    v = np.asarray(values, dtype=float)
    nx, ny = v.shape
    lo, hi = float(np.nanmin(v)), float(np.nanmax(v))
    span = hi - lo if hi > lo else 1.0
    cm = colormaps[cmap]
    l, r, t, b = MARGIN
    size = min(WIDTH - l - r - 60, HEIGHT - t - b)
    cw, ch = size / nx, size / ny
    body = [f'<text x="{WIDTH / 2:.1f}" y="{t - 10}" text-anchor="middle">{escape(title)}</text>']
    for i in range(nx):
        for j in range(ny):
            rgba = cm((v[i, j] - lo) / span)
            col = "#%02x%02x%02x" % tuple(int(round(255 * c)) for c in rgba[:3])
            body.append(f'<rect x="{_n(l + i * cw)}" y="{_n(t + (ny - 1 - j) * ch)}" width="{_n(cw + 0.3)}" '
                        f'height="{_n(ch + 0.3)}" fill="{col}"/>')
    # colour bar
    bx = l + size + 20
    for k in range(50):
        rgba = cm(1 - k / 49)
        col = "#%02x%02x%02x" % tuple(int(round(255 * c)) for c in rgba[:3])
        body.append(f'<rect x="{bx}" y="{_n(t + k * size / 50)}" width="12" height="{_n(size / 50 + 0.3)}" fill="{col}"/>')
    body.append(f'<text x="{bx + 16}" y="{t + 8}">{hi:.4g}</text>')
    body.append(f'<text x="{bx + 16}" y="{_n(t + size)}">{lo:.4g}</text>')
    return _doc(body)


def write_svg(path, text: str):
    return atomic_write(path, text)
