"""Minimal static SVG plots (lines and histograms); no plotting runtime needed.

Figures are pure functions of the data handed in, so any persisted CSV can
be re-rendered offline to identical bytes.
"""

from __future__ import annotations

import math

WIDTH, HEIGHT = 640.0, 440.0
ML, MR, MT, MB = 64.0, 16.0, 34.0, 48.0
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10.0 ** math.floor(math.log10(span / n))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= n:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-12 * span:
        out.append(0.0 if abs(t) < 1e-12 * span else t)
        t += step
    return out


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:.4g}"


class _Canvas:
    def __init__(self, title, xlabel, ylabel, xlim, ylim, logy=False):
        self.logy = logy
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0f}" '
            f'height="{HEIGHT:.0f}" viewBox="0 0 {WIDTH:.0f} {HEIGHT:.0f}">',
            f'<rect width="{WIDTH:.0f}" height="{HEIGHT:.0f}" fill="white"/>',
            f'<text x="{WIDTH/2:.1f}" y="20" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{title}</text>',
        ]
        self._axes(xlabel, ylabel)

    def px(self, x):
        return ML + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - ML - MR)

    def py(self, y):
        return HEIGHT - MB - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MT - MB)

    def _axes(self, xlabel, ylabel):
        p = self.parts
        p.append(f'<rect x="{ML}" y="{MT}" width="{WIDTH-ML-MR:.1f}" '
                 f'height="{HEIGHT-MT-MB:.1f}" fill="none" stroke="#444"/>')
        for t in _ticks(self.x0, self.x1):
            xx = self.px(t)
            p.append(f'<line x1="{xx:.1f}" y1="{HEIGHT-MB:.1f}" x2="{xx:.1f}" '
                     f'y2="{HEIGHT-MB+5:.1f}" stroke="#444"/>')
            p.append(f'<text x="{xx:.1f}" y="{HEIGHT-MB+18:.1f}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{_fmt(t)}</text>')
        for t in _ticks(self.y0, self.y1):
            yy = self.py(t)
            label = _fmt(10.0 ** t) if self.logy else _fmt(t)
            p.append(f'<line x1="{ML-5:.1f}" y1="{yy:.1f}" x2="{ML:.1f}" '
                     f'y2="{yy:.1f}" stroke="#444"/>')
            p.append(f'<text x="{ML-8:.1f}" y="{yy+4:.1f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{label}</text>')
        p.append(f'<text x="{(ML+WIDTH-MR)/2:.1f}" y="{HEIGHT-10:.1f}" '
                 f'text-anchor="middle" font-family="sans-serif" font-size="12">{xlabel}</text>')
        p.append(f'<text x="16" y="{(MT+HEIGHT-MB)/2:.1f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12" '
                 f'transform="rotate(-90 16 {(MT+HEIGHT-MB)/2:.1f})">{ylabel}</text>')

    def polyline(self, xs, ys, color):
        pts = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys))
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                          f'stroke-width="1.6"/>')

    def bar(self, x_left, x_right, y, color):
        x0, x1 = self.px(x_left), self.px(x_right)
        y0, y1 = self.py(0.0), self.py(y)
        self.parts.append(f'<rect x="{x0:.2f}" y="{min(y0,y1):.2f}" '
                          f'width="{x1-x0:.2f}" height="{abs(y0-y1):.2f}" '
                          f'fill="{color}" fill-opacity="0.6" stroke="none"/>')

    def legend(self, labels_colors):
        y = MT + 14
        for label, color in labels_colors:
            self.parts.append(f'<line x1="{WIDTH-MR-150:.1f}" y1="{y:.1f}" '
                              f'x2="{WIDTH-MR-126:.1f}" y2="{y:.1f}" stroke="{color}" '
                              f'stroke-width="2"/>')
            self.parts.append(f'<text x="{WIDTH-MR-120:.1f}" y="{y+4:.1f}" '
                              f'font-family="sans-serif" font-size="11">{label}</text>')
            y += 16

    def save(self, path):
        self.parts.append("</svg>")
        with open(path, "w") as f:
            f.write("\n".join(self.parts))
            f.write("\n")


def line_plot(path, series, title="", xlabel="", ylabel="", logy=False):
    """series: iterable of (xs, ys, label). logy plots log10(y) with decade labels."""
    prepared = []
    for i, (xs, ys, label) in enumerate(series):
        xs = list(map(float, xs))
        ys = [math.log10(max(float(v), 1e-300)) if logy else float(v) for v in ys]
        prepared.append((xs, ys, label, COLORS[i % len(COLORS)]))
    all_x = [x for s in prepared for x in s[0]]
    all_y = [y for s in prepared for y in s[1]]
    pad = 0.05 * (max(all_y) - min(all_y) or 1.0)
    cv = _Canvas(title, xlabel, ylabel, (min(all_x), max(all_x)),
                 (min(all_y) - pad, max(all_y) + pad), logy=logy)
    for xs, ys, label, color in prepared:
        cv.polyline(xs, ys, color)
    cv.legend([(s[2], s[3]) for s in prepared if s[2]])
    cv.save(path)


def histogram(path, samples, bins, lo, hi, overlay=None, title="", xlabel="x"):
    """Density-normalized histogram; overlay is an optional (xs, ys, label) curve."""
    n = len(samples)
    edges = [lo + (hi - lo) * i / bins for i in range(bins + 1)]
    counts = [0] * bins
    width = (hi - lo) / bins
    for s in samples:
        i = int((float(s) - lo) / width)
        if 0 <= i < bins:
            counts[i] += 1
    dens = [c / (n * width) for c in counts]
    ymax = max(dens + ([max(map(float, overlay[1]))] if overlay else [0.0]))
    cv = _Canvas(title, xlabel, "density", (lo, hi), (0.0, 1.1 * (ymax or 1.0)))
    for i in range(bins):
        cv.bar(edges[i], edges[i + 1], dens[i], COLORS[0])
    if overlay:
        cv.polyline(list(map(float, overlay[0])), list(map(float, overlay[1])), COLORS[1])
        cv.legend([("samples", COLORS[0]), (overlay[2], COLORS[1])])
    cv.save(path)
