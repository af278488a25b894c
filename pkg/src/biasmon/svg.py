"""Minimal deterministic SVG rendering of a CUSUM chart."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .monitor import Chart

WIDTH, HEIGHT = 800, 400
MARGIN = 50


def _f(x: float) -> str:
    return f"{x:.2f}"


def chart_svg(chart: Chart, h: float, title: str = "CUSUM chart") -> str:
    """SVG with the two signal polylines, the +/-h lines and a marker per alarm episode."""
    n = len(chart)
    values = [abs(h)]
    if n:
        values += [float(np.max(np.abs(chart.s_upper))), float(np.max(np.abs(chart.s_lower)))]
    ymax = max(values) * 1.1 or 1.0
    x_span = max(n - 1, 1)
    plot_w, plot_h = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def px(i):
        return MARGIN + plot_w * i / x_span

    def py(v):
        return MARGIN + plot_h * (1.0 - (v + ymax) / (2 * ymax))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<title>{escape(title)}</title>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>',
        f'<line class="zero" x1="{MARGIN}" y1="{_f(py(0))}" x2="{WIDTH - MARGIN}" y2="{_f(py(0))}" '
        'stroke="#bbb" stroke-width="1"/>',
    ]
    for name, v in (("upper", h), ("lower", -h)):
        out.append(
            f'<line class="threshold threshold-{name}" x1="{MARGIN}" y1="{_f(py(v))}" '
            f'x2="{WIDTH - MARGIN}" y2="{_f(py(v))}" stroke="#d62728" stroke-dasharray="6,4"/>'
        )
    if n:
        for name, sig, colour in (("s_upper", chart.s_upper, "#1f77b4"), ("s_lower", chart.s_lower, "#2ca02c")):
            pts = " ".join(f"{_f(px(i))},{_f(py(v))}" for i, v in enumerate(sig))
            out.append(f'<polyline class="signal {name}" fill="none" stroke="{colour}" '
                       f'stroke-width="1.5" points="{pts}"/>')
    for start, _ in chart.episodes:
        sig = chart.s_upper[start] if chart.s_upper[start] >= -chart.s_lower[start] else chart.s_lower[start]
        out.append(
            f'<g class="alarm" data-start="{start}">'
            f'<line x1="{_f(px(start))}" y1="{MARGIN}" x2="{_f(px(start))}" y2="{HEIGHT - MARGIN}" '
            'stroke="#ff7f0e" stroke-width="1"/>'
            f'<circle cx="{_f(px(start))}" cy="{_f(py(sig))}" r="4" fill="#ff7f0e"/></g>'
        )
    out += [
        f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">batch index</text>',
        f'<text x="{MARGIN}" y="{MARGIN - 10}" font-size="12">h = {h:.4g}</text>',
        "</svg>",
    ]
    return "\n".join(out) + "\n"
