"""SVG figure rendering: structure, determinism, and dimension checks."""

import re

import numpy as np
import pytest

from lagcoder import (DimensionMismatch, EncodingMatrix, PlotSpec, render,
                      scale_encodings)
from lagcoder.plots import layer_color
from lagcoder.types import PeakLagTable


def bump_matrix(n_layers=48, n_lags=41):
    """One smooth positive bump per layer, peak drifting with the layer."""
    lags = np.linspace(-500.0, 500.0, n_lags)
    centers = np.linspace(-200.0, 200.0, n_layers)
    heights = np.linspace(0.2, 0.8, n_layers)
    values = heights[:, None] * np.exp(
        -0.5 * ((lags[None, :] - centers[:, None]) / 120.0) ** 2)
    return EncodingMatrix(values, lags, tag="e00")


def polyline_points(svg):
    """[(xs, ys)] parsed from every polyline in draw order."""
    out = []
    for m in re.finditer(r'<polyline points="([^"]+)"', svg):
        pairs = [p.split(",") for p in m.group(1).split()]
        xs = np.array([float(a) for a, _ in pairs])
        ys = np.array([float(b) for _, b in pairs])
        out.append((xs, ys))
    return out


def test_scaled_encoding_48_polylines_peak_at_one():
    scaled = scale_encodings(bump_matrix())
    svg = render(PlotSpec(kind="scaled_encoding"), scaled)
    lines = polyline_points(svg)
    assert len(lines) == 48
    # every scaled row peaks at 1, so all lines touch the same top pixel
    tops = np.array([ys.min() for _, ys in lines])  # SVG y grows downward
    np.testing.assert_allclose(tops, tops[0], atol=0.02)


def test_encoding_lines_split_on_nan_gaps():
    m = bump_matrix(n_layers=2)
    vals = m.values.copy()
    vals[0, 15:18] = np.nan
    gappy = EncodingMatrix(vals, m.lags_ms, tag="e00")
    svg = render(PlotSpec(kind="encoding_lines"), gappy)
    assert len(polyline_points(svg)) == 3  # 2 segments + 1 whole line


def test_render_deterministic_and_written(tmp_path):
    m = bump_matrix(n_layers=6)
    out = tmp_path / "fig" / "lines.svg"
    a = render(PlotSpec(kind="encoding_lines", title="demo", out_path=out), m)
    b = render(PlotSpec(kind="encoding_lines", title="demo"), m)
    assert a == b
    assert out.read_text() == a
    assert a.startswith("<?xml")
    assert a.rstrip().endswith("</svg>")


def test_scatter_points_and_annotation():
    peaks = PeakLagTable(np.arange(1, 49), 100.0 + 6.0 * np.arange(1, 49),
                         np.full(48, 0.5))
    svg = render(PlotSpec(kind="lag_layer_scatter"), (peaks, "r = 0.97"))
    assert svg.count("<circle") == 48
    assert "r = 0.97" in svg


def test_scatter_skips_nonfinite_lags():
    lags = np.array([100.0, np.nan, 300.0])
    peaks = PeakLagTable(np.array([1, 2, 3]), lags, np.full(3, 0.4))
    svg = render(PlotSpec(kind="lag_layer_scatter"), peaks)
    assert svg.count("<circle") == 2


def test_layer_bar_one_rect_per_layer():
    svg = render(PlotSpec(kind="layer_bar"),
                 (np.arange(1, 13), np.linspace(0.1, 0.6, 12)))
    assert svg.count("<rect") == 13  # 12 bars plus the canvas background


def test_roi_panel_groups_subplots():
    mats = [bump_matrix(n_layers=4), bump_matrix(n_layers=4)]
    mats[1].tag = "IFG"
    svg = render(PlotSpec(kind="roi_panel", width=800, height=500), mats)
    assert svg.count('<g transform="translate(') == 2
    assert len(polyline_points(svg)) == 8


def test_layer_color_endpoints():
    assert layer_color(1, 48) == "#d72d2d"   # red end
    assert layer_color(48, 48) == "#2d46d7"  # blue end
    assert layer_color(1, 1) == "#d72d2d"


def test_bad_inputs_rejected():
    with pytest.raises(DimensionMismatch):
        PlotSpec(kind="pie_chart")
    with pytest.raises(DimensionMismatch):
        render(PlotSpec(kind="encoding_lines"),
               EncodingMatrix(np.empty((0, 5)), np.arange(5.0), tag="x"))
    with pytest.raises(DimensionMismatch):
        render(PlotSpec(kind="scaled_encoding"), "not a matrix")
    with pytest.raises(DimensionMismatch):
        render(PlotSpec(kind="roi_panel"), [bump_matrix(2), "oops"])
    with pytest.raises(DimensionMismatch):
        render(PlotSpec(kind="lag_layer_scatter"),
               PeakLagTable(np.empty(0, dtype=int), np.empty(0), np.empty(0)))
