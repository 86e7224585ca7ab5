"""Dependency-free SVG accuracy curves (mean accuracy vs training fraction)."""

from __future__ import annotations

from html import escape

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f")


def accuracy_svg(reports, width: int = 640, height: int = 420) -> str:
    """One polyline per report with +-std error bars."""
    left, right, top, bottom = 60, 170, 20, 50
    pw, ph = width - left - right, height - top - bottom
    fractions = sorted({f for rep in reports for f, _, _ in rep.summary()})
    lo = min(fractions) if fractions else 0.0
    hi = max(fractions) if fractions else 1.0
    if hi == lo:
        lo, hi = lo - 0.05, hi + 0.05

    def sx(f):
        return left + (f - lo) / (hi - lo) * pw

    def sy(a):
        return top + (1.0 - min(max(a, 0.0), 1.0)) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             '<rect width="100%" height="100%" fill="white"/>',
             f'<line class="axis" x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
             f'<line class="axis" x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for k in range(6):
        a = k / 5
        parts.append(f'<text x="{left - 8}" y="{sy(a) + 4:.1f}" font-size="11" text-anchor="end">{a:.1f}</text>')
    for f in fractions:
        parts.append(f'<text x="{sx(f):.1f}" y="{top + ph + 16}" font-size="11" text-anchor="middle">{f:g}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 12}" font-size="12" text-anchor="middle">'
                 'training fraction</text>')
    parts.append(f'<text x="16" y="{top + ph / 2}" font-size="12" text-anchor="middle" '
                 f'transform="rotate(-90 16 {top + ph / 2})">accuracy</text>')

    for i, rep in enumerate(reports):
        color = _PALETTE[i % len(_PALETTE)]
        rows = rep.summary()
        pts = " ".join(f"{sx(f):.2f},{sy(m):.2f}" for f, m, _ in rows)
        name = escape(rep.descriptor)
        parts.append(f'<polyline data-descriptor="{name}" points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="2"/>')
        for f, m, s in rows:
            parts.append(f'<line class="errorbar" x1="{sx(f):.2f}" y1="{sy(m - s):.2f}" '
                         f'x2="{sx(f):.2f}" y2="{sy(m + s):.2f}" stroke="{color}"/>')
        ly = top + 14 + 18 * i
        parts.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 38}" y="{ly + 4}" font-size="11">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
