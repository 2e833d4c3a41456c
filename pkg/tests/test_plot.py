import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from eiwv.plot import band_chart_svg, write_band_chart


def polylines(svg):
    root = ET.fromstring(svg)
    ns = {"s": "http://www.w3.org/2000/svg"}
    lines = []
    for el in root.findall("s:polyline", ns):
        pts = np.array([[float(v) for v in p.split(",")] for p in el.get("points").split()])
        lines.append(pts)
    return root, lines


def test_svg_is_valid_and_has_one_line_per_series():
    rng = np.random.default_rng(0)
    curves = {"a": rng.normal(size=(5, 30)), "b & c": rng.normal(size=(3, 30))}
    svg = band_chart_svg(curves, title="t")
    root, lines = polylines(svg)
    assert len(lines) == 2 and all(len(p) == 30 for p in lines)
    assert "b &amp; c" in svg
    assert len(re.findall("<polygon", svg)) == 2


def test_mean_line_recovers_data():
    """Plotted points map back to the per-step mean within pixel rounding."""
    rng = np.random.default_rng(1)
    data = rng.normal(size=(4, 50)).cumsum(axis=1)
    svg = band_chart_svg({"x": data}, height=420)
    _, (pts,) = polylines(svg)
    # same layout as the chart: 40 px top margin, 50 px bottom, 5% padding around the data range
    lo, hi = data.min(), data.max()
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    ph = 420 - 40 - 50
    values = lo + (hi - lo) * (1 - (pts[:, 1] - 40) / ph)
    pixel = (hi - lo) / ph
    assert np.max(np.abs(values - data.mean(axis=0))) <= 0.05 * pixel + 1e-9


def test_flat_and_empty(tmp_path):
    band_chart_svg({"flat": np.ones((2, 5))})
    band_chart_svg({"single": np.arange(1.0)})
    with pytest.raises(ValueError):
        band_chart_svg({})
    write_band_chart(tmp_path / "c.svg", {"x": np.zeros((1, 3))}, title="z")
    assert (tmp_path / "c.svg").read_text().startswith("<svg")
