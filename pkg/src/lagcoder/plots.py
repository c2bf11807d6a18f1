"""Deterministic SVG figures for encoding results.

Figures are emitted as standalone SVG text with fixed-precision
coordinates, no timestamps and no randomness, so byte-identical inputs
yield byte-identical files (golden-file friendly). Layer color runs from
red (layer 1) to blue (the last layer).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch
from .types import EncodingMatrix, PeakLagTable

KINDS = ("encoding_lines", "scaled_encoding", "lag_layer_scatter",
         "layer_bar", "roi_panel")


@dataclass
class PlotSpec:
    kind: str
    title: str = ""
    width: int = 640
    height: int = 420
    x_range: tuple[float, float] | None = None
    y_range: tuple[float, float] | None = None
    out_path: str | Path | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DimensionMismatch(f"unknown plot kind {self.kind!r}")


def layer_color(layer: int, n_layers: int) -> str:
    """Red for the first layer through blue for the last."""
    t = 0.0 if n_layers <= 1 else (layer - 1) / (n_layers - 1)
    r = int(round(215 + t * (45 - 215)))
    g = int(round(45 + t * (70 - 45)))
    b = int(round(45 + t * (215 - 45)))
    return f"#{r:02x}{g:02x}{b:02x}"


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.4g}"


@dataclass
class _Frame:
    """Maps data coordinates into a fixed plot box."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    left: float = 56.0
    top: float = 34.0
    right: float = 16.0
    bottom: float = 40.0
    width: float = 640.0
    height: float = 420.0

    def x(self, v: float) -> float:
        span = self.x_hi - self.x_lo or 1.0
        return self.left + (v - self.x_lo) / span * (self.width - self.left - self.right)

    def y(self, v: float) -> float:
        span = self.y_hi - self.y_lo or 1.0
        return self.height - self.bottom - (v - self.y_lo) / span * (
            self.height - self.top - self.bottom)

    def axes_svg(self, x_label: str, y_label: str) -> list[str]:
        x0, x1 = self.left, self.width - self.right
        y0, y1 = self.height - self.bottom, self.top
        parts = [
            f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x1)}" y2="{_fmt(y0)}" stroke="#222" stroke-width="1"/>',
            f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x0)}" y2="{_fmt(y1)}" stroke="#222" stroke-width="1"/>',
        ]
        for frac in (0.0, 0.5, 1.0):
            xv = self.x_lo + frac * (self.x_hi - self.x_lo)
            yv = self.y_lo + frac * (self.y_hi - self.y_lo)
            xp, yp = self.x(xv), self.y(yv)
            parts.append(
                f'<line x1="{_fmt(xp)}" y1="{_fmt(y0)}" x2="{_fmt(xp)}" y2="{_fmt(y0 + 4)}" stroke="#222" stroke-width="1"/>')
            parts.append(
                f'<text x="{_fmt(xp)}" y="{_fmt(y0 + 16)}" font-size="11" text-anchor="middle" fill="#222">{_tick_label(xv)}</text>')
            parts.append(
                f'<line x1="{_fmt(x0 - 4)}" y1="{_fmt(yp)}" x2="{_fmt(x0)}" y2="{_fmt(yp)}" stroke="#222" stroke-width="1"/>')
            parts.append(
                f'<text x="{_fmt(x0 - 7)}" y="{_fmt(yp + 4)}" font-size="11" text-anchor="end" fill="#222">{_tick_label(yv)}</text>')
        parts.append(
            f'<text x="{_fmt((x0 + x1) / 2)}" y="{_fmt(self.height - 8)}" font-size="12" text-anchor="middle" fill="#222">{x_label}</text>')
        parts.append(
            f'<text x="14" y="{_fmt((y0 + y1) / 2)}" font-size="12" text-anchor="middle" fill="#222" transform="rotate(-90 14 {_fmt((y0 + y1) / 2)})">{y_label}</text>')
        return parts


def _document(spec: PlotSpec, body: list[str]) -> str:
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{spec.width}" '
        f'height="{spec.height}" viewBox="0 0 {spec.width} {spec.height}">',
        f'<rect x="0" y="0" width="{spec.width}" height="{spec.height}" fill="#ffffff"/>',
    ]
    if spec.title:
        parts.append(
            f'<text x="{spec.width // 2}" y="20" font-size="14" '
            f'text-anchor="middle" fill="#111">{spec.title}</text>')
    parts.extend(body)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _finite_range(arr: np.ndarray, fallback=(0.0, 1.0)) -> tuple[float, float]:
    vals = arr[np.isfinite(arr)]
    if vals.size == 0:
        return fallback
    lo, hi = float(vals.min()), float(vals.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.04 * (hi - lo)
    return lo - pad, hi + pad


def _polyline_segments(frame: _Frame, xs: np.ndarray, ys: np.ndarray,
                       color: str, width: float = 1.2) -> list[str]:
    """NaN-aware polylines: gaps split the line into separate segments."""
    parts = []
    run: list[str] = []
    for x, y in zip(xs, ys):
        if np.isfinite(y):
            run.append(f"{_fmt(frame.x(float(x)))},{_fmt(frame.y(float(y)))}")
        elif run:
            if len(run) > 1:
                parts.append(f'<polyline points="{" ".join(run)}" fill="none" '
                             f'stroke="{color}" stroke-width="{width}"/>')
            run = []
    if len(run) > 1:
        parts.append(f'<polyline points="{" ".join(run)}" fill="none" '
                     f'stroke="{color}" stroke-width="{width}"/>')
    return parts


def _matrix_lines(spec: PlotSpec, m: EncodingMatrix,
                  y_label: str) -> str:
    if m.values.shape[0] == 0:
        raise DimensionMismatch("encoding matrix has no layers")
    n_ref = max(m.layer_indices)
    x_lo, x_hi = spec.x_range or (float(m.lags_ms[0]), float(m.lags_ms[-1]))
    y_lo, y_hi = spec.y_range or _finite_range(m.values)
    frame = _Frame(x_lo, x_hi, y_lo, y_hi, width=spec.width, height=spec.height)
    body = frame.axes_svg("lag (ms)", y_label)
    zero_x = frame.x(0.0)
    body.append(f'<line x1="{_fmt(zero_x)}" y1="{_fmt(frame.y(y_lo))}" '
                f'x2="{_fmt(zero_x)}" y2="{_fmt(frame.y(y_hi))}" '
                f'stroke="#bbbbbb" stroke-width="0.8" stroke-dasharray="4 3"/>')
    for row, layer in zip(m.values, m.layer_indices):
        body.extend(_polyline_segments(frame, m.lags_ms, row,
                                       layer_color(layer, n_ref)))
    return _document(spec, body)


def render(spec: PlotSpec, data) -> str:
    """Render one figure; the payload depends on spec.kind.

    encoding_lines / scaled_encoding: EncodingMatrix
    lag_layer_scatter: PeakLagTable, or (PeakLagTable, annotation string)
    layer_bar: (layer_indices, values)
    roi_panel: sequence of EncodingMatrix
    Writes to spec.out_path when set; returns the SVG text either way.
    """
    if spec.kind in ("encoding_lines", "scaled_encoding"):
        if not isinstance(data, EncodingMatrix):
            raise DimensionMismatch(f"{spec.kind} expects an EncodingMatrix")
        label = "scaled r" if spec.kind == "scaled_encoding" else "r"
        doc = _matrix_lines(spec, data, label)
    elif spec.kind == "lag_layer_scatter":
        doc = _scatter(spec, data)
    elif spec.kind == "layer_bar":
        doc = _bars(spec, data)
    elif spec.kind == "roi_panel":
        doc = _panel(spec, data)
    else:  # unreachable: PlotSpec validated the kind
        raise DimensionMismatch(spec.kind)
    if spec.out_path is not None:
        Path(spec.out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(spec.out_path).write_text(doc)
    return doc


def _scatter(spec: PlotSpec, data) -> str:
    annotation = ""
    peaks = data
    if isinstance(data, tuple):
        peaks, annotation = data
    if not isinstance(peaks, PeakLagTable):
        raise DimensionMismatch("lag_layer_scatter expects a PeakLagTable")
    if len(peaks.layer_indices) == 0:
        raise DimensionMismatch("no layers to scatter")
    layers = np.asarray(peaks.layer_indices, dtype=np.float64)
    lags = np.asarray(peaks.peak_lag_ms, dtype=np.float64)
    n_ref = int(layers.max())
    x_lo, x_hi = spec.x_range or (float(layers.min()) - 1, float(layers.max()) + 1)
    y_lo, y_hi = spec.y_range or _finite_range(lags)
    frame = _Frame(x_lo, x_hi, y_lo, y_hi, width=spec.width, height=spec.height)
    body = frame.axes_svg("layer", "peak lag (ms)")
    for layer, lag in zip(peaks.layer_indices, lags):
        if not np.isfinite(lag):
            continue
        body.append(f'<circle cx="{_fmt(frame.x(layer))}" cy="{_fmt(frame.y(lag))}" '
                    f'r="3.5" fill="{layer_color(int(layer), n_ref)}"/>')
    if annotation:
        body.append(f'<text x="{_fmt(frame.x(x_lo) + 10)}" y="{_fmt(frame.y(y_hi) + 14)}" '
                    f'font-size="12" fill="#111">{annotation}</text>')
    return _document(spec, body)


def _bars(spec: PlotSpec, data) -> str:
    try:
        layer_indices, values = data
    except (TypeError, ValueError) as exc:
        raise DimensionMismatch("layer_bar expects (layer_indices, values)") from exc
    layers = list(layer_indices)
    vals = np.asarray(values, dtype=np.float64)
    if len(layers) == 0 or vals.size != len(layers):
        raise DimensionMismatch("layer_bar lengths differ or are empty")
    n_ref = max(layers)
    x_lo, x_hi = min(layers) - 0.6, max(layers) + 0.6
    y_lo, y_hi = spec.y_range or (min(0.0, float(np.nanmin(vals))),
                                  _finite_range(vals)[1])
    frame = _Frame(x_lo, x_hi, y_lo, y_hi, width=spec.width, height=spec.height)
    body = frame.axes_svg("layer", "value")
    bar_w = max(1.0, (frame.x(x_lo + 1.0) - frame.x(x_lo)) * 0.8)
    y_zero = frame.y(max(0.0, y_lo))
    for layer, v in zip(layers, vals):
        if not np.isfinite(v):
            continue
        x_mid = frame.x(float(layer))
        y_top = frame.y(float(v))
        top, bot = min(y_top, y_zero), max(y_top, y_zero)
        body.append(f'<rect x="{_fmt(x_mid - bar_w / 2)}" y="{_fmt(top)}" '
                    f'width="{_fmt(bar_w)}" height="{_fmt(bot - top)}" '
                    f'fill="{layer_color(int(layer), n_ref)}"/>')
    return _document(spec, body)


def _panel(spec: PlotSpec, data) -> str:
    matrices = list(data) if isinstance(data, (list, tuple)) else None
    if not matrices or not all(isinstance(m, EncodingMatrix) for m in matrices):
        raise DimensionMismatch("roi_panel expects a sequence of EncodingMatrix")
    cols = 2 if len(matrices) > 1 else 1
    rows = (len(matrices) + cols - 1) // cols
    cell_w, cell_h = spec.width // cols, (spec.height - 24) // rows
    body: list[str] = []
    for i, m in enumerate(matrices):
        sub = PlotSpec(kind="encoding_lines", title=m.tag,
                       width=cell_w, height=cell_h,
                       x_range=spec.x_range, y_range=spec.y_range)
        inner = _matrix_lines(sub, m, "r")
        # strip the xml prolog and outer svg tag, reposition via a group
        content = inner.split("\n", 2)[2].rsplit("</svg>", 1)[0]
        x_off = (i % cols) * cell_w
        y_off = 24 + (i // cols) * cell_h
        body.append(f'<g transform="translate({x_off} {y_off})">')
        body.append(content.rstrip("\n"))
        body.append("</g>")
    return _document(spec, body)
