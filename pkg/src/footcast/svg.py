"""Minimal SVG emitters for report figures: heatmaps with path overlays, line
traces, scatter plots with a fitted line, and bar histograms.

Output is plain text with fixed number formatting so reruns are byte-identical.
"""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#d62728", "#9467bd", "#1f77b4", "#2ca02c", "#ff7f0e", "#8c564b")
WIDTH, HEIGHT = 480, 360
PAD = 48


def _f(v: float) -> str:
    return f"{float(v):.2f}"


def _viridis(t: float) -> str:
    # four-stop approximation of the viridis ramp
    stops = np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]], dtype=float)
    t = float(np.clip(t, 0.0, 1.0)) * (len(stops) - 1)
    i = min(int(t), len(stops) - 2)
    c = stops[i] + (stops[i + 1] - stops[i]) * (t - i)
    return "#%02x%02x%02x" % tuple(int(round(x)) for x in c)


class Figure:
    def __init__(self, title: str, width: int = WIDTH, height: int = HEIGHT):
        self.width = width
        self.height = height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
            f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        ]
        self.set_limits((0.0, 1.0), (0.0, 1.0))

    def set_limits(self, xlim, ylim) -> None:
        x0, x1 = (float(v) for v in xlim)
        y0, y1 = (float(v) for v in ylim)
        self.xlim = (x0, x1 if x1 > x0 else x0 + 1.0)
        self.ylim = (y0, y1 if y1 > y0 else y0 + 1.0)

    def px(self, x):
        x0, x1 = self.xlim
        return PAD + (np.asarray(x, dtype=float) - x0) / (x1 - x0) * (self.width - 2 * PAD)

    def py(self, y):
        y0, y1 = self.ylim
        return self.height - PAD - (np.asarray(y, dtype=float) - y0) / (y1 - y0) * (self.height - 2 * PAD)

    def axes(self, xlabel: str = "", ylabel: str = "", ticks: int = 5) -> None:
        l, r = PAD, self.width - PAD
        t, b = PAD, self.height - PAD
        self.parts.append(f'<rect x="{l}" y="{t}" width="{r - l}" height="{b - t}" fill="none" stroke="black"/>')
        for v in np.linspace(*self.xlim, ticks):
            x = self.px(v)
            self.parts.append(f'<line x1="{_f(x)}" y1="{b}" x2="{_f(x)}" y2="{b + 4}" stroke="black"/>')
            self.parts.append(f'<text x="{_f(x)}" y="{b + 16}" text-anchor="middle">{v:.3g}</text>')
        for v in np.linspace(*self.ylim, ticks):
            y = self.py(v)
            self.parts.append(f'<line x1="{l - 4}" y1="{_f(y)}" x2="{l}" y2="{_f(y)}" stroke="black"/>')
            self.parts.append(f'<text x="{l - 6}" y="{_f(y + 4)}" text-anchor="end">{v:.3g}</text>')
        if xlabel:
            self.parts.append(f'<text x="{self.width / 2:.1f}" y="{self.height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
        if ylabel:
            self.parts.append(
                f'<text x="14" y="{self.height / 2:.1f}" text-anchor="middle" '
                f'transform="rotate(-90 14 {self.height / 2:.1f})">{escape(ylabel)}</text>'
            )

    def heatmap(self, values, origin, resolution, vmax=None) -> None:
        values = np.asarray(values, dtype=float)
        rows, cols = values.shape
        top = float(vmax) if vmax is not None else float(values.max(initial=0.0))
        lo = float(values.min(initial=0.0))
        span = top - lo if top > lo else 1.0
        w = abs(float(self.px(resolution) - self.px(0.0)))
        h = abs(float(self.py(resolution) - self.py(0.0)))
        for r in range(rows):
            for c in range(cols):
                x = origin[0] + (c - 0.5) * resolution
                y = origin[1] + (r + 0.5) * resolution
                colour = _viridis((values[r, c] - lo) / span)
                self.parts.append(
                    f'<rect x="{_f(self.px(x))}" y="{_f(self.py(y))}" width="{_f(w + 0.3)}" '
                    f'height="{_f(h + 0.3)}" fill="{colour}"/>'
                )

    def polyline(self, x, y, colour: str, label: str = "", width: float = 1.5) -> None:
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(self.px(x), self.py(y)))
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="{width}"/>')
        if label:
            self._legend(label, colour)

    def points(self, x, y, colour: str, radius: float = 2.0, label: str = "") -> None:
        for a, b in zip(self.px(x), self.py(y)):
            self.parts.append(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="{radius}" fill="{colour}" fill-opacity="0.6"/>')
        if label:
            self._legend(label, colour)

    def bars(self, edges, counts, colour: str, offset: float = 0.0, width_frac: float = 1.0, label: str = "") -> None:
        edges = np.asarray(edges, dtype=float)
        for lo, hi, n in zip(edges[:-1], edges[1:], counts):
            w = (hi - lo) * width_frac
            x0 = lo + offset * (hi - lo)
            top = self.py(n)
            self.parts.append(
                f'<rect x="{_f(self.px(x0))}" y="{_f(top)}" width="{_f(self.px(x0 + w) - self.px(x0))}" '
                f'height="{_f(self.py(0) - top)}" fill="{colour}" fill-opacity="0.8"/>'
            )
        if label:
            self._legend(label, colour)

    def band(self, x0, x1, colour: str, opacity: float = 0.2) -> None:
        y_top, y_bot = self.py(self.ylim[1]), self.py(self.ylim[0])
        self.parts.append(
            f'<rect x="{_f(self.px(x0))}" y="{_f(y_top)}" width="{_f(self.px(x1) - self.px(x0))}" '
            f'height="{_f(y_bot - y_top)}" fill="{colour}" fill-opacity="{opacity}"/>'
        )

    def marker(self, x, y, colour: str, text: str = "") -> None:
        cx, cy = float(self.px(x)), float(self.py(y))
        self.parts.append(f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="5" fill="none" stroke="{colour}" stroke-width="2"/>')
        if text:
            self.parts.append(f'<text x="{_f(cx + 7)}" y="{_f(cy - 7)}" fill="{colour}">{escape(text)}</text>')

    def _legend(self, label: str, colour: str) -> None:
        n = sum(1 for p in self.parts if p.startswith("<!--legend-->"))
        y = PAD + 12 + 14 * n
        x = self.width - PAD - 110
        self.parts.append(
            f'<!--legend--><rect x="{x}" y="{y - 8}" width="10" height="10" fill="{colour}"/>'
            f'<text x="{x + 14}" y="{y + 1}">{escape(label)}</text>'
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.render())


def heatmap_with_paths(title, values, origin, resolution, paths=(), goal=None, vmax=None) -> Figure:
    """``paths`` is a sequence of (label, (N, 2) xy array)."""
    values = np.asarray(values, dtype=float)
    rows, cols = values.shape
    fig = Figure(title, WIDTH, int(WIDTH * rows / max(cols, 1)) if cols >= rows else WIDTH)
    fig.set_limits(
        (origin[0] - resolution / 2, origin[0] + (cols - 0.5) * resolution),
        (origin[1] - resolution / 2, origin[1] + (rows - 0.5) * resolution),
    )
    fig.heatmap(values, origin, resolution, vmax)
    for i, (label, xy) in enumerate(paths):
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        fig.polyline(xy[:, 0], xy[:, 1], PALETTE[i % len(PALETTE)], label, width=2.0)
    if goal is not None:
        fig.marker(goal[0], goal[1], "white", "goal")
    fig.axes("x (m)", "y (m)")
    return fig


def line_plot(title, series, xlabel="", ylabel="", hline=None, bands=()) -> Figure:
    """``series`` is a sequence of (label, x, y); ``bands`` are (x0, x1) shaded spans."""
    fig = Figure(title)
    xs = np.concatenate([np.asarray(x, dtype=float) for _, x, _ in series]) if series else np.zeros(1)
    ys = np.concatenate([np.asarray(y, dtype=float) for _, _, y in series]) if series else np.zeros(1)
    if hline is not None:
        ys = np.append(ys, hline)
    fig.set_limits((xs.min(), xs.max()), (min(0.0, ys.min()), ys.max() * 1.05 if ys.max() > 0 else 1.0))
    for x0, x1 in bands:
        fig.band(x0, x1, "#d62728")
    for i, (label, x, y) in enumerate(series):
        fig.polyline(x, y, PALETTE[(i + 2) % len(PALETTE)], label)
    if hline is not None:
        fig.polyline(fig.xlim, (hline, hline), "#7f7f7f", "threshold", width=1.0)
    fig.axes(xlabel, ylabel)
    return fig


def scatter_plot(title, groups, xlabel="", ylabel="") -> Figure:
    """``groups`` is a sequence of (label, x, y, slope, intercept); the fit is drawn as a line."""
    fig = Figure(title)
    xs = np.concatenate([np.asarray(g[1], dtype=float) for g in groups])
    ys = np.concatenate([np.asarray(g[2], dtype=float) for g in groups])
    fig.set_limits((xs.min(), xs.max()), (ys.min(), ys.max()))
    for i, (label, x, y, slope, intercept) in enumerate(groups):
        colour = PALETTE[(i + 1) % len(PALETTE)]
        fig.points(x, y, colour, label=label)
        line_x = np.array(fig.xlim)
        line_y = np.clip(intercept + slope * line_x, *fig.ylim)
        fig.polyline(line_x, line_y, colour)
    fig.axes(xlabel, ylabel)
    return fig


def histogram_plot(title, edges, groups, xlabel="", ylabel="count") -> Figure:
    """Side-by-side bars; ``groups`` is a sequence of (label, counts)."""
    fig = Figure(title)
    top = max((max(c) for _, c in groups), default=1)
    fig.set_limits((edges[0], edges[-1]), (0, top * 1.1 if top > 0 else 1.0))
    n = max(len(groups), 1)
    for i, (label, counts) in enumerate(groups):
        fig.bars(edges, counts, PALETTE[i % len(PALETTE)], offset=i / n, width_frac=1.0 / n, label=label)
    fig.axes(xlabel, ylabel)
    return fig
