"""Deterministic SVG figures, no plotting dependency.

Every figure is assembled from a tiny element builder with fixed
formatting (coordinates to 2 decimals, labels through ``%g``), so a
rerun on the same inputs produces byte-identical files.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .gam import GamFit, smooth_se
from .gamm import ImportanceReport
from .ingest import AlignedFrame, ColumnSummary, format_timestamp

_FONT = "font-family=\"sans-serif\""

#: Fixed series palette; cycled when a figure has more lines than entries.
PALETTE = ("#1b6ca8", "#c0392b", "#1e8449", "#7d3c98", "#b9770e", "#34495e")


class SvgCanvas:
    """Collects SVG elements and renders a standalone document."""

    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.parts: list[str] = []

    @staticmethod
    def _fmt(v: float) -> str:
        return f"{v:.2f}"

    def rect(self, x, y, w, h, fill="none", stroke="#333", stroke_width=1.0):
        f = self._fmt
        self.parts.append(
            f'<rect x="{f(x)}" y="{f(y)}" width="{f(w)}" height="{f(h)}" '
            f'fill="{fill}" stroke="{stroke}" stroke-width="{f(stroke_width)}"/>'
        )

    def line(self, x1, y1, x2, y2, stroke="#333", stroke_width=1.0, dash: Optional[str] = None):
        f = self._fmt
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{f(x1)}" y1="{f(y1)}" x2="{f(x2)}" y2="{f(y2)}" '
            f'stroke="{stroke}" stroke-width="{f(stroke_width)}"{extra}/>'
        )

    def polyline(self, xs, ys, stroke="#1b6ca8", stroke_width=1.2, dash: Optional[str] = None):
        f = self._fmt
        pts = " ".join(f"{f(x)},{f(y)}" for x, y in zip(xs, ys))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
            f'stroke-width="{f(stroke_width)}"{extra}/>'
        )

    def text(self, x, y, content, size=11, anchor="start", fill="#222", rotate: bool = False):
        f = self._fmt
        transform = f' transform="rotate(-90 {f(x)} {f(y)})"' if rotate else ""
        self.parts.append(
            f'<text x="{f(x)}" y="{f(y)}" font-size="{size}" text-anchor="{anchor}" '
            f'fill="{fill}" {_FONT}{transform}>{_escape(content)}</text>'
        )

    def render(self) -> str:
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">'
        )
        body = "\n".join(self.parts)
        return f"{head}\n{body}\n</svg>\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    """Round tick positions covering [lo, hi]."""
    if not math.isfinite(lo) or not math.isfinite(hi):
        return []
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if step >= raw:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


class _Axes:
    """One plot area with linear data-to-pixel scales."""

    def __init__(self, canvas, x0, y0, w, h, xlim, ylim):
        self.c = canvas
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim, self.ylim = xlim, ylim

    def sx(self, x: float) -> float:
        lo, hi = self.xlim
        span = hi - lo if hi > lo else 1.0
        return self.x0 + (x - lo) / span * self.w

    def sy(self, y: float) -> float:
        lo, hi = self.ylim
        span = hi - lo if hi > lo else 1.0
        return self.y0 + self.h - (y - lo) / span * self.h

    def frame(self, title="", xlabel="", ylabel=""):
        c = self.c
        c.rect(self.x0, self.y0, self.w, self.h, stroke="#666")
        for t in _ticks(*self.xlim):
            px = self.sx(t)
            c.line(px, self.y0 + self.h, px, self.y0 + self.h + 4, stroke="#666")
            c.text(px, self.y0 + self.h + 16, f"{t:g}", size=10, anchor="middle")
        for t in _ticks(*self.ylim):
            py = self.sy(t)
            c.line(self.x0 - 4, py, self.x0, py, stroke="#666")
            c.text(self.x0 - 7, py + 3, f"{t:g}", size=10, anchor="end")
        if title:
            c.text(self.x0 + self.w / 2, self.y0 - 8, title, size=12, anchor="middle")
        if xlabel:
            c.text(self.x0 + self.w / 2, self.y0 + self.h + 32, xlabel, size=11, anchor="middle")
        if ylabel:
            c.text(self.x0 - 42, self.y0 + self.h / 2, ylabel, size=11, anchor="middle", rotate=True)


def _pad(lo: float, hi: float) -> tuple[float, float]:
    span = hi - lo
    if span <= 0:
        span = abs(hi) if hi else 1.0
    return lo - 0.05 * span, hi + 0.05 * span


def summary_boxes(summaries: dict[str, ColumnSummary], title: str = "") -> str:
    """Box-and-whisker panel, one box per column, each on its own scale."""
    names = list(summaries)
    panel_w, height = 120, 300
    width = 60 + panel_w * len(names) + 20
    c = SvgCanvas(width, height)
    if title:
        c.text(width / 2, 18, title, size=13, anchor="middle")
    for i, name in enumerate(names):
        s = summaries[name]
        ylim = _pad(s.min, s.max)
        ax = _Axes(c, 60 + i * panel_w, 40, panel_w - 35, height - 90, (0.0, 1.0), ylim)
        ax.frame(title=name)
        cx = ax.sx(0.5)
        half = (panel_w - 35) * 0.22
        ax.c.line(cx, ax.sy(s.min), cx, ax.sy(s.q1), stroke="#444")
        ax.c.line(cx, ax.sy(s.q3), cx, ax.sy(s.max), stroke="#444")
        for v in (s.min, s.max):
            ax.c.line(cx - half / 2, ax.sy(v), cx + half / 2, ax.sy(v), stroke="#444")
        top, bottom = ax.sy(s.q3), ax.sy(s.q1)
        ax.c.rect(cx - half, top, 2 * half, bottom - top, fill="#cfe3f2", stroke="#1b6ca8")
        ax.c.line(cx - half, ax.sy(s.median), cx + half, ax.sy(s.median), stroke="#c0392b", stroke_width=1.6)
    return c.render()


def series_window(
    frame: AlignedFrame,
    columns: Sequence[str],
    start_epoch: Optional[int] = None,
    days: float = 5.0,
    utc_offset_hours: Optional[int] = None,
    title: str = "",
) -> str:
    """Stacked time-series panels over a short window of the grid.

    The time axis is rendered in UTC; when ``utc_offset_hours`` is given
    the label also names the site-local standard-time offset.
    """
    start = int(frame.grid[0]) if start_epoch is None else int(start_epoch)
    end = start + int(days * 86400)
    mask = (frame.grid >= start) & (frame.grid <= end)
    if not mask.any():
        mask = np.ones(frame.grid.size, dtype=bool)
    t_days = (frame.grid[mask] - start) / 86400.0
    xlabel = f"days from {format_timestamp(start)} (UTC"
    if utc_offset_hours is not None:
        xlabel += f"; site local UTC{utc_offset_hours:+03d}:00"
    xlabel += ")"

    panel_h, width = 110, 640
    height = 40 + panel_h * len(columns) + 30
    c = SvgCanvas(width, height)
    if title:
        c.text(width / 2, 18, title, size=13, anchor="middle")
    for i, name in enumerate(columns):
        vals = frame.column(name)[mask]
        ok = np.isfinite(vals)
        ylim = _pad(float(vals[ok].min()), float(vals[ok].max())) if ok.any() else (0.0, 1.0)
        ax = _Axes(
            c, 60, 40 + i * panel_h, width - 90, panel_h - 34,
            (float(t_days[0]), float(t_days[-1]) or 1.0), ylim,
        )
        ax.frame(title=name, xlabel=xlabel if i == len(columns) - 1 else "")
        color = PALETTE[i % len(PALETTE)]
        # Breaks at missing values keep gaps visible instead of bridged.
        run_start = None
        for j in range(vals.size + 1):
            if j < vals.size and ok[j]:
                if run_start is None:
                    run_start = j
            elif run_start is not None:
                seg = slice(run_start, j)
                ax.c.polyline(
                    [ax.sx(x) for x in t_days[seg]],
                    [ax.sy(v) for v in vals[seg]],
                    stroke=color,
                )
                run_start = None
    return c.render()


def smooth_panels(fit: GamFit, names: Optional[Sequence[str]] = None, title: str = "") -> str:
    """Fitted smooths with 95 percent pointwise bands, one panel each."""
    names = list(names) if names is not None else fit.term_names
    panel_w, panel_h = 300, 220
    cols = 2 if len(names) > 1 else 1
    rows = (len(names) + cols - 1) // cols
    width = 50 + cols * panel_w
    height = 40 + rows * panel_h
    c = SvgCanvas(width, height)
    if title:
        c.text(width / 2, 18, title, size=13, anchor="middle")
    for i, name in enumerate(names):
        grid, est, se = smooth_se(fit, name)
        lo, hi = est - 1.96 * se, est + 1.96 * se
        r, col = divmod(i, cols)
        ax = _Axes(
            c,
            50 + col * panel_w + 8,
            40 + r * panel_h,
            panel_w - 60,
            panel_h - 60,
            (float(grid[0]), float(grid[-1])),
            _pad(float(lo.min()), float(hi.max())),
        )
        edf = fit.term(name).edf
        ax.frame(title=f"{name} (edf {edf:.1f})", xlabel=name)
        ax.c.polyline([ax.sx(x) for x in grid], [ax.sy(v) for v in lo], stroke="#888", dash="4,3")
        ax.c.polyline([ax.sx(x) for x in grid], [ax.sy(v) for v in hi], stroke="#888", dash="4,3")
        ax.c.polyline([ax.sx(x) for x in grid], [ax.sy(v) for v in est], stroke="#1b6ca8", stroke_width=1.6)
        if ax.ylim[0] < 0 < ax.ylim[1]:
            ax.c.line(ax.sx(ax.xlim[0]), ax.sy(0), ax.sx(ax.xlim[1]), ax.sy(0), stroke="#ccc")
    return c.render()


def importance_bars(report: ImportanceReport, title: str = "") -> str:
    """Horizontal bars: per-covariate share plus the correlation term."""
    rows = [(e.name, e.importance_pct) for e in report.entries if e.error is None]
    rows.sort(key=lambda r: (-r[1], r[0]))
    rows.append(("serial correlation", report.arma_share_pct))
    bar_h, width = 30, 520
    height = 60 + bar_h * len(rows) + 20
    c = SvgCanvas(width, height)
    if title:
        c.text(width / 2, 18, title, size=13, anchor="middle")
    vmax = max(max((abs(v) for _, v in rows), default=1.0), 1e-9)
    x0, bar_w = 170, width - 200
    c.text(x0 + bar_w / 2, 36, "share of explained deviance (percentage points)", size=10, anchor="middle")
    for i, (name, val) in enumerate(rows):
        y = 50 + i * bar_h
        c.text(x0 - 8, y + bar_h * 0.62, name, size=11, anchor="end")
        w = bar_w * max(val, 0.0) / vmax
        fill = "#1b6ca8" if name != "serial correlation" else "#b9770e"
        c.rect(x0, y + 4, w, bar_h - 12, fill=fill, stroke="none", stroke_width=0.0)
        c.text(x0 + w + 6, y + bar_h * 0.62, f"{val:.1f}", size=10)
    return c.render()
