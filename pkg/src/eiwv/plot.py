"""Minimal SVG line charts: per-series mean with a min/max band across seeds."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

__all__ = ["band_chart_svg", "write_band_chart"]

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, n))


def band_chart_svg(curves: dict, title="", xlabel="timestep", ylabel="reward", width=720, height=420) -> str:
    """``curves`` maps a label to a ``(n_seeds, T)`` array."""
    if not curves:
        raise ValueError("nothing to plot")
    ml, mr, mt, mb = 70, 160, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    arrays = {k: np.atleast_2d(np.asarray(v, dtype=float)) for k, v in curves.items()}
    T = max(a.shape[1] for a in arrays.values())
    lo = min(np.nanmin(a) for a in arrays.values())
    hi = max(np.nanmax(a) for a in arrays.values())
    if hi - lo < 1e-12:
        lo, hi = lo - 1, hi + 1
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    def sx(t):
        return ml + pw * t / max(T - 1, 1)

    def sy(v):
        return mt + ph * (1 - (v - lo) / (hi - lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for v in _ticks(lo, hi):
        y = sy(v)
        out.append(f'<line x1="{ml - 4}" y1="{y:.1f}" x2="{ml}" y2="{y:.1f}" stroke="#444"/>')
        out.append(f'<text x="{ml - 6}" y="{y + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    for t in _ticks(0, T - 1):
        x = sx(t)
        out.append(f'<line x1="{x:.1f}" y1="{mt + ph}" x2="{x:.1f}" y2="{mt + ph + 4}" stroke="#444"/>')
        out.append(f'<text x="{x:.1f}" y="{mt + ph + 16}" text-anchor="middle">{int(round(t))}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" transform="rotate(-90 16 {mt + ph / 2:.1f})">{escape(ylabel)}</text>'
    )

    for k, (label, a) in enumerate(arrays.items()):
        color = PALETTE[k % len(PALETTE)]
        ts = np.arange(a.shape[1])
        mean, amin, amax = a.mean(axis=0), a.min(axis=0), a.max(axis=0)
        upper = " ".join(f"{sx(t):.1f},{sy(v):.1f}" for t, v in zip(ts, amax))
        lower = " ".join(f"{sx(t):.1f},{sy(v):.1f}" for t, v in zip(ts[::-1], amin[::-1]))
        out.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.18" stroke="none"/>')
        line = " ".join(f"{sx(t):.1f},{sy(v):.1f}" for t, v in zip(ts, mean))
        out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = mt + 14 + 18 * k
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" stroke="{color}" stroke-width="3"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{ly + 4}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_band_chart(path, curves: dict, **kw) -> None:
    with open(path, "w") as fh:
        fh.write(band_chart_svg(curves, **kw))
