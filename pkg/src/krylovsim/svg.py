"""Tiny static SVG plots: line and scatter series on linear or log axes.

Plots are derived views of the CSV data and carry no extra information.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


@dataclass
class Series:
    x: list[float]
    y: list[float]
    label: str = ""
    kind: str = "line"  # "line", "scatter" or "step"
    yerr: list[float] | None = None
    dashed: bool = False


@dataclass
class Figure:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    logx: bool = False
    logy: bool = False
    width: int = 560
    height: int = 400
    series: list[Series] = field(default_factory=list)
    vlines: list[tuple[float, str]] = field(default_factory=list)

    def add(self, *args, **kw) -> "Figure":
        self.series.append(Series(*args, **kw))
        return self

    def render(self) -> str:
        return _render(self)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.render())
        return path


def _tf(v: float, log: bool) -> float | None:
    if v is None or not math.isfinite(v):
        return None
    if log:
        return math.log10(v) if v > 0 else None
    return v


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        return [float(k) for k in range(math.floor(lo), math.ceil(hi) + 1)]
    span = hi - lo or 1.0
    step = 10 ** math.floor(math.log10(span / 5))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= 6:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12 * span:
        out.append(round(t, 12))
        t += step
    return out


def _fmt(t: float, log: bool) -> str:
    if log:
        return f"1e{int(t)}"
    return f"{t:g}"


def _render(fig: Figure) -> str:
    ml, mr, mt, mb = 70, 20, 36, 50
    pw, ph = fig.width - ml - mr, fig.height - mt - mb
    pts = [
        (_tf(x, fig.logx), _tf(y, fig.logy))
        for s in fig.series
        for x, y in zip(s.x, s.y)
    ]
    pts = [(x, y) for x, y in pts if x is not None and y is not None]
    pts += [(_tf(x, fig.logx), None) for x, _ in fig.vlines]
    xs = [p[0] for p in pts if p[0] is not None] or [0.0, 1.0]
    ys = [p[1] for p in pts if p[1] is not None] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + (1 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{fig.width}" height="{fig.height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{fig.width}" height="{fig.height}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{fig.width / 2}" y="20" text-anchor="middle" font-size="13">{escape(fig.title)}</text>',
        f'<text x="{ml + pw / 2}" y="{fig.height - 10}" text-anchor="middle">{escape(fig.xlabel)}</text>',
        f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" transform="rotate(-90 16 {mt + ph / 2})">'
        f"{escape(fig.ylabel)}</text>",
    ]
    for t in _ticks(x0, x1, fig.logx):
        if x0 <= t <= x1:
            out.append(f'<line x1="{px(t):.1f}" y1="{mt + ph}" x2="{px(t):.1f}" y2="{mt + ph + 4}" stroke="black"/>')
            out.append(f'<text x="{px(t):.1f}" y="{mt + ph + 16}" text-anchor="middle">{_fmt(t, fig.logx)}</text>')
    for t in _ticks(y0, y1, fig.logy):
        if y0 <= t <= y1:
            out.append(f'<line x1="{ml - 4}" y1="{py(t):.1f}" x2="{ml}" y2="{py(t):.1f}" stroke="black"/>')
            out.append(f'<text x="{ml - 6}" y="{py(t) + 4:.1f}" text-anchor="end">{_fmt(t, fig.logy)}</text>')
    for x, label in fig.vlines:
        tx = _tf(x, fig.logx)
        if tx is None:
            continue
        out.append(
            f'<line x1="{px(tx):.1f}" y1="{mt}" x2="{px(tx):.1f}" y2="{mt + ph}" stroke="gray" stroke-dasharray="5,4"/>'
        )
        out.append(f'<text x="{px(tx) + 3:.1f}" y="{mt + 12}" fill="gray">{escape(label)}</text>')
    for i, s in enumerate(fig.series):
        color = PALETTE[i % len(PALETTE)]
        coords = []
        for j, (x, y) in enumerate(zip(s.x, s.y)):
            tx, ty = _tf(x, fig.logx), _tf(y, fig.logy)
            if tx is None or ty is None:
                continue
            coords.append((px(tx), py(ty)))
            if s.yerr is not None and s.yerr[j]:
                lo, hi = _tf(y - s.yerr[j], fig.logy), _tf(y + s.yerr[j], fig.logy)
                if lo is not None and hi is not None:
                    out.append(
                        f'<line x1="{px(tx):.1f}" y1="{py(lo):.1f}" x2="{px(tx):.1f}" y2="{py(hi):.1f}" stroke="{color}"/>'
                    )
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        if s.kind == "step" and coords:
            path = [f"M{coords[0][0]:.1f},{coords[0][1]:.1f}"]
            for (xa, ya), (xb, yb) in zip(coords, coords[1:]):
                path.append(f"H{xb:.1f}V{yb:.1f}")
            out.append(f'<path d="{" ".join(path)}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        elif s.kind == "line" and len(coords) > 1:
            d = " ".join(f"{x:.1f},{y:.1f}" for x, y in coords)
            out.append(f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        if s.kind in ("scatter", "line"):
            for x, y in coords:
                out.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="2.5" fill="{color}"/>')
        if s.label:
            ly = mt + 14 + 14 * i
            out.append(f'<rect x="{ml + pw - 120}" y="{ly - 8}" width="10" height="10" fill="{color}"/>')
            out.append(f'<text x="{ml + pw - 106}" y="{ly + 1}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
