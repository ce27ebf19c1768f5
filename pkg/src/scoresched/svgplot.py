"""Minimal self-contained SVG line plots.

CSV files are the canonical artifacts; these plots are quick-look summaries,
so the writer stays dependency-free and byte-deterministic (no timestamps,
fixed float formatting).
"""

from __future__ import annotations

import math

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 16, 30, 46


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min(s for s in (1 * mag, 2 * mag, 5 * mag, 10 * mag) if s >= raw)
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-12 * step:
        out.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return out


def _span(values, log: bool):
    vals = [v for c in values for v in c if math.isfinite(v)
            and (not log or v > 0)]
    if not vals:
        return (0.0, 1.0)
    lo, hi = min(vals), max(vals)
    if log:
        lo, hi = math.log10(lo), math.log10(hi)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.04 * (hi - lo)
    return lo - pad, hi + pad


def line_plot(path, curves, title: str = "", xlabel: str = "",
              ylabel: str = "", logy: bool = False) -> None:
    """Write a polyline plot; curves is a list of (x, y, label) triples."""
    curves = [(list(map(float, x)), list(map(float, y)), str(label))
              for x, y, label in curves]
    x_lo, x_hi = _span([c[0] for c in curves], log=False)
    y_lo, y_hi = _span([c[1] for c in curves], log=logy)
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def px(v):
        return MARGIN_L + pw * (v - x_lo) / (x_hi - x_lo)

    def py(v):
        if logy:
            v = math.log10(v) if v > 0 else y_lo
        return MARGIN_T + ph * (1.0 - (v - y_lo) / (y_hi - y_lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" '
        'fill="none" stroke="#888" stroke-width="1"/>',
    ]
    if title:
        parts.append(f'<text x="{WIDTH / 2:.1f}" y="19" font-size="14" '
                     f'text-anchor="middle" font-family="sans-serif">'
                     f'{title}</text>')
    for tx in _ticks(x_lo, x_hi):
        parts.append(f'<line x1="{px(tx):.2f}" y1="{MARGIN_T + ph}" '
                     f'x2="{px(tx):.2f}" y2="{MARGIN_T + ph + 4}" '
                     'stroke="#888"/>')
        parts.append(f'<text x="{px(tx):.2f}" y="{MARGIN_T + ph + 18}" '
                     'font-size="11" text-anchor="middle" '
                     f'font-family="sans-serif">{tx:.4g}</text>')
    for ty in _ticks(y_lo, y_hi):
        yy = MARGIN_T + ph * (1.0 - (ty - y_lo) / (y_hi - y_lo))
        label = f"1e{ty:.3g}" if logy else f"{ty:.4g}"
        parts.append(f'<line x1="{MARGIN_L - 4}" y1="{yy:.2f}" '
                     f'x2="{MARGIN_L}" y2="{yy:.2f}" stroke="#888"/>')
        parts.append(f'<text x="{MARGIN_L - 7}" y="{yy + 4:.2f}" '
                     'font-size="11" text-anchor="end" '
                     f'font-family="sans-serif">{label}</text>')
    if xlabel:
        parts.append(f'<text x="{MARGIN_L + pw / 2:.1f}" y="{HEIGHT - 8}" '
                     'font-size="12" text-anchor="middle" '
                     f'font-family="sans-serif">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="15" y="{MARGIN_T + ph / 2:.1f}" '
                     'font-size="12" text-anchor="middle" '
                     f'font-family="sans-serif" transform="rotate(-90 15 '
                     f'{MARGIN_T + ph / 2:.1f})">{ylabel}</text>')

    for k, (xs, ys, label) in enumerate(curves):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys)
                       if math.isfinite(x) and math.isfinite(y)
                       and (not logy or y > 0))
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        if label:
            ly = MARGIN_T + 16 + 16 * k
            lx = MARGIN_L + pw - 150
            parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" '
                         f'y2="{ly - 4}" stroke="{color}" stroke-width="1.5"/>')
            parts.append(f'<text x="{lx + 27}" y="{ly}" font-size="11" '
                         f'font-family="sans-serif">{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
