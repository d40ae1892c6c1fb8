"""Minimal hand-built SVG 1.1 charts.

Every plotted value is also written verbatim (``repr``) into a ``<title>``
element so the number can be traced back to the report it came from.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=60, right=150, top=40, bottom=50)
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _num(v):
    return f"{v:.2f}"


def _header(title):
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.2f}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{escape(title)}</text>',
    ]


class _Frame:
    """Plot area mapping with a fixed 0-100 y range (Rank-1 percentages)."""

    def __init__(self, n_x):
        self.x0, self.x1 = MARGIN["left"], WIDTH - MARGIN["right"]
        self.y0, self.y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
        self.n_x = n_x

    def y(self, v):
        return self.y0 + (self.y1 - self.y0) * (v / 100.0)

    def x(self, i):
        if self.n_x <= 1:
            return (self.x0 + self.x1) / 2
        return self.x0 + (self.x1 - self.x0) * i / (self.n_x - 1)

    def axes(self, ylabel):
        out = [
            f'<line x1="{self.x0}" y1="{self.y0}" x2="{self.x1}" y2="{self.y0}" stroke="black"/>',
            f'<line x1="{self.x0}" y1="{self.y0}" x2="{self.x0}" y2="{self.y1}" stroke="black"/>',
        ]
        for tick in range(0, 101, 20):
            y = _num(self.y(tick))
            out.append(f'<line x1="{self.x0 - 4}" y1="{y}" x2="{self.x1}" y2="{y}" stroke="#dddddd"/>')
            out.append(f'<text x="{self.x0 - 8}" y="{y}" text-anchor="end" dominant-baseline="middle" '
                       f'font-family="sans-serif" font-size="11">{tick}</text>')
        out.append(f'<text x="16" y="{(self.y0 + self.y1) / 2:.2f}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="12" transform="rotate(-90 16 {(self.y0 + self.y1) / 2:.2f})">{escape(ylabel)}</text>')
        return out


def line_chart(title, x_labels, series, upper_bound=None, ylabel="Rank-1 (%)"):
    """One polyline per entry of ``series`` (name -> list of y values aligned with ``x_labels``)."""
    frame = _Frame(len(x_labels))
    out = _header(title) + frame.axes(ylabel)
    for i, label in enumerate(x_labels):
        out.append(f'<text x="{_num(frame.x(i))}" y="{frame.y0 + 18}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{escape(str(label))}</text>')
    for k, (name, values) in enumerate(series.items()):
        colour = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{_num(frame.x(i))},{_num(frame.y(v))}" for i, v in enumerate(values))
        out.append(f'<g class="series" id="series-{escape(str(name))}">')
        out.append(f"<title>{escape(str(name))}</title>")
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="2" points="{pts}"/>')
        for i, v in enumerate(values):
            out.append(f'<circle cx="{_num(frame.x(i))}" cy="{_num(frame.y(v))}" r="3" fill="{colour}">'
                       f"<title>{repr(float(v))}</title></circle>")
        out.append("</g>")
        ly = MARGIN["top"] + 18 * k + 10
        lx = WIDTH - MARGIN["right"] + 15
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}" font-family="sans-serif" font-size="11">'
                   f"{escape(str(name))}</text>")
    if upper_bound is not None:
        y = _num(frame.y(upper_bound))
        out.append('<g class="upper-bound">')
        out.append(f"<title>{repr(float(upper_bound))}</title>")
        out.append(f'<line x1="{frame.x0}" y1="{y}" x2="{frame.x1}" y2="{y}" stroke="black" '
                   f'stroke-dasharray="6,4" stroke-width="1.5"/>')
        out.append(f'<text x="{frame.x1 + 4}" y="{y}" font-family="sans-serif" font-size="11">UB</text>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def bar_chart(title, groups, ylabel="Final average Rank-1 (%)"):
    """Grouped bars: ``groups`` maps group name -> list of (bar label, value)."""
    names = list(groups)
    frame = _Frame(len(names))
    out = _header(title) + frame.axes(ylabel)
    labels = []
    for bars in groups.values():
        for label, _ in bars:
            if label not in labels:
                labels.append(label)
    slot = (frame.x1 - frame.x0) / max(len(names), 1)
    width = slot * 0.8 / max(len(labels), 1)
    for g, name in enumerate(names):
        left = frame.x0 + slot * g + slot * 0.1
        out.append(f'<g class="group" id="group-{escape(name)}">')
        for label, value in groups[name]:
            b = labels.index(label)
            top = frame.y(value)
            out.append(f'<rect x="{_num(left + b * width)}" y="{_num(top)}" width="{_num(width * 0.9)}" '
                       f'height="{_num(frame.y0 - top)}" fill="{PALETTE[b % len(PALETTE)]}">'
                       f"<title>{escape(label)}: {repr(float(value))}</title></rect>")
        out.append("</g>")
        out.append(f'<text x="{_num(left + slot * 0.4)}" y="{frame.y0 + 18}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{escape(name)}</text>')
    for b, label in enumerate(labels):
        ly = MARGIN["top"] + 18 * b + 4
        lx = WIDTH - MARGIN["right"] + 15
        out.append(f'<rect x="{lx}" y="{ly}" width="12" height="12" fill="{PALETTE[b % len(PALETTE)]}"/>')
        out.append(f'<text x="{lx + 18}" y="{ly + 10}" font-family="sans-serif" font-size="11">'
                   f"{escape(label)}</text>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
