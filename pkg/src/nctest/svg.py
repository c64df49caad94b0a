"""Self-contained SVG drawing for reports: histogram, step curve, QQ.

No plotting dependency; every figure is a single <svg> string with the
data mapped through a fixed margin box.  Numbers are formatted with %g
so identical inputs give identical bytes.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DataError

WIDTH = 640
HEIGHT = 400
MARGIN = {"left": 56, "right": 16, "top": 34, "bottom": 42}
THRESHOLD_COLOR = "#c0392b"
BAR_COLOR = "#4878a8"
LINE_COLOR = "#2f2f2f"
AXIS_COLOR = "#444444"
FONT = 'font-family="Helvetica,Arial,sans-serif"'


def _fmt(x: float) -> str:
    if x == 0:
        return "0"
    return format(float(x), ".6g")


def _tick_label(x: float) -> str:
    return format(float(x), ".4g")


class _Frame:
    """Maps data coordinates into the plot box of a fixed-size canvas."""

    def __init__(self, xlim, ylim):
        x0, x1 = float(xlim[0]), float(xlim[1])
        y0, y1 = float(ylim[0]), float(ylim[1])
        if not (math.isfinite(x0) and math.isfinite(x1) and math.isfinite(y0) and math.isfinite(y1)):
            raise DataError("plot limits must be finite")
        if x1 <= x0:
            pad = 0.5 if x0 == x1 else 0.0
            x0, x1 = x0 - pad, x1 + pad
        if y1 <= y0:
            pad = 0.5 if y0 == y1 else 0.0
            y0, y1 = y0 - pad, y1 + pad
        self.xlim = (x0, x1)
        self.ylim = (y0, y1)
        self.box = (
            MARGIN["left"],
            MARGIN["top"],
            WIDTH - MARGIN["right"],
            HEIGHT - MARGIN["bottom"],
        )

    def x(self, v: float) -> float:
        left, _, right, _ = self.box
        x0, x1 = self.xlim
        return left + (float(v) - x0) / (x1 - x0) * (right - left)

    def y(self, v: float) -> float:
        _, top, _, bottom = self.box
        y0, y1 = self.ylim
        return bottom - (float(v) - y0) / (y1 - y0) * (bottom - top)

    def _ticks(self, lo: float, hi: float, count: int = 5):
        return np.linspace(lo, hi, count)

    def axes(self, title: str, xlabel: str, ylabel: str) -> list:
        left, top, right, bottom = self.box
        parts = [
            f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" '
            f'fill="none" stroke="{AXIS_COLOR}" stroke-width="1"/>'
        ]
        for v in self._ticks(*self.xlim):
            px = self.x(v)
            parts.append(
                f'<line x1="{_fmt(px)}" y1="{bottom}" x2="{_fmt(px)}" y2="{bottom + 4}" '
                f'stroke="{AXIS_COLOR}" stroke-width="1"/>'
            )
            parts.append(
                f'<text x="{_fmt(px)}" y="{bottom + 16}" {FONT} font-size="11" '
                f'text-anchor="middle" fill="{AXIS_COLOR}">{_tick_label(v)}</text>'
            )
        for v in self._ticks(*self.ylim):
            py = self.y(v)
            parts.append(
                f'<line x1="{left - 4}" y1="{_fmt(py)}" x2="{left}" y2="{_fmt(py)}" '
                f'stroke="{AXIS_COLOR}" stroke-width="1"/>'
            )
            parts.append(
                f'<text x="{left - 6}" y="{_fmt(py + 4)}" {FONT} font-size="11" '
                f'text-anchor="end" fill="{AXIS_COLOR}">{_tick_label(v)}</text>'
            )
        if title:
            parts.append(
                f'<text x="{(left + right) / 2}" y="{top - 12}" {FONT} font-size="14" '
                f'text-anchor="middle" fill="{LINE_COLOR}">{_escape(title)}</text>'
            )
        if xlabel:
            parts.append(
                f'<text x="{(left + right) / 2}" y="{HEIGHT - 8}" {FONT} font-size="12" '
                f'text-anchor="middle" fill="{AXIS_COLOR}">{_escape(xlabel)}</text>'
            )
        if ylabel:
            cx, cy = 14, (top + bottom) / 2
            parts.append(
                f'<text x="{cx}" y="{_fmt(cy)}" {FONT} font-size="12" text-anchor="middle" '
                f'fill="{AXIS_COLOR}" transform="rotate(-90 {cx} {_fmt(cy)})">{_escape(ylabel)}</text>'
            )
        return parts

    def vline(self, x: float, label: str = "") -> list:
        _, top, _, bottom = self.box
        px = self.x(x)
        parts = [
            f'<line x1="{_fmt(px)}" y1="{top}" x2="{_fmt(px)}" y2="{bottom}" '
            f'stroke="{THRESHOLD_COLOR}" stroke-width="1.5" stroke-dasharray="5,3"/>'
        ]
        if label:
            parts.append(
                f'<text x="{_fmt(px + 4)}" y="{top + 14}" {FONT} font-size="11" '
                f'fill="{THRESHOLD_COLOR}">{_escape(label)}</text>'
            )
        return parts


def _escape(text: str) -> str:
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _document(elements, desc: str) -> str:
    body = "\n".join(elements)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">\n'
        f"<desc>{_escape(desc)}</desc>\n"
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>\n'
        f"{body}\n</svg>\n"
    )


def histogram_svg(values, bins: int = 40, thresholds=(), title: str = "",
                  xlabel: str = "value", desc: str = "") -> str:
    """Histogram with optional red threshold lines, as (x, label) pairs."""
    data = np.asarray(values, dtype=float).ravel()
    if data.size == 0:
        raise DataError("cannot draw a histogram of nothing")
    if not np.all(np.isfinite(data)):
        raise DataError("histogram values must be finite")
    if bins < 1:
        raise DataError("bins must be positive")
    counts, edges = np.histogram(data, bins=int(bins))
    marks = [(float(t), str(lab)) for t, lab in
             ((pair if isinstance(pair, (tuple, list)) else (pair, "")) for pair in thresholds)]
    xlo = min([edges[0]] + [t for t, _ in marks])
    xhi = max([edges[-1]] + [t for t, _ in marks])
    frame = _Frame((xlo, xhi), (0, max(1, counts.max())))
    parts = frame.axes(title, xlabel, "count")
    for k in range(counts.size):
        if counts[k] == 0:
            continue
        x0, x1 = frame.x(edges[k]), frame.x(edges[k + 1])
        y0, y1 = frame.y(counts[k]), frame.y(0)
        parts.append(
            f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(x1 - x0)}" '
            f'height="{_fmt(y1 - y0)}" fill="{BAR_COLOR}" stroke="#ffffff" stroke-width="0.5"/>'
        )
    for t, label in marks:
        parts.extend(frame.vline(t, label))
    return _document(parts, desc)


def step_curve_svg(breakpoints, values, left_value=None, thresholds=(),
                   title: str = "", xlabel: str = "t", ylabel: str = "",
                   desc: str = "") -> str:
    """Piecewise-constant curve drawn as a staircase.

    values[k] applies from breakpoints[k] onward; left_value, when
    given, extends a flat segment before the first breakpoint.
    """
    bp = np.asarray(breakpoints, dtype=float).ravel()
    vals = np.asarray(values, dtype=float).ravel()
    if bp.size == 0 or bp.size != vals.size:
        raise DataError("step curve needs equal, nonempty breakpoints and values")
    if not (np.all(np.isfinite(bp)) and np.all(np.isfinite(vals))):
        raise DataError("step curve points must be finite")
    marks = [(float(t), str(lab)) for t, lab in
             ((pair if isinstance(pair, (tuple, list)) else (pair, "")) for pair in thresholds)]
    span = bp[-1] - bp[0] if bp.size > 1 else 1.0
    pad = 0.05 * span
    xlo = min([bp[0] - pad] + [t for t, _ in marks])
    xhi = max([bp[-1] + pad] + [t for t, _ in marks])
    ys = list(vals) + ([left_value] if left_value is not None else [])
    frame = _Frame((xlo, xhi), (min(ys), max(ys)))
    parts = frame.axes(title, xlabel, ylabel)
    points = []
    if left_value is not None:
        points.append((xlo, float(left_value)))
        points.append((bp[0], float(left_value)))
    for k in range(bp.size):
        points.append((bp[k], vals[k]))
        right = bp[k + 1] if k + 1 < bp.size else xhi
        points.append((right, vals[k]))
    path = " ".join(f"{_fmt(frame.x(x))},{_fmt(frame.y(y))}" for x, y in points)
    parts.append(
        f'<polyline points="{path}" fill="none" stroke="{LINE_COLOR}" stroke-width="1.5"/>'
    )
    for t, label in marks:
        parts.extend(frame.vline(t, label))
    return _document(parts, desc)


def qq_svg(quantiles_a, quantiles_b, title: str = "", xlabel: str = "",
           ylabel: str = "", desc: str = "") -> str:
    """Quantile-quantile scatter with the identity diagonal."""
    qa = np.asarray(quantiles_a, dtype=float).ravel()
    qb = np.asarray(quantiles_b, dtype=float).ravel()
    if qa.size == 0 or qa.size != qb.size:
        raise DataError("QQ plot needs equal, nonempty quantile vectors")
    if not (np.all(np.isfinite(qa)) and np.all(np.isfinite(qb))):
        raise DataError("QQ quantiles must be finite")
    lo = min(qa.min(), qb.min())
    hi = max(qa.max(), qb.max())
    frame = _Frame((lo, hi), (lo, hi))
    parts = frame.axes(title, xlabel, ylabel)
    parts.append(
        f'<line x1="{_fmt(frame.x(lo))}" y1="{_fmt(frame.y(lo))}" '
        f'x2="{_fmt(frame.x(hi))}" y2="{_fmt(frame.y(hi))}" '
        f'stroke="#999999" stroke-width="1" stroke-dasharray="3,3"/>'
    )
    for x, y in zip(qa, qb):
        parts.append(
            f'<circle cx="{_fmt(frame.x(x))}" cy="{_fmt(frame.y(y))}" r="3" '
            f'fill="{BAR_COLOR}" fill-opacity="0.75"/>'
        )
    return _document(parts, desc)
