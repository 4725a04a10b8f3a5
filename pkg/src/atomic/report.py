"""SVG figures (with CSV twins) built from files on disk.

The SVG is written by hand so output is byte-stable: coordinates use a fixed
number of decimals and no ids or timestamps are emitted.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .circuit_sim import read_waveform_csv
from .deviation import CorrectnessTable, DeviationResults, RangeRow, level_label
from .device import LOGIC_HIGH, LOGIC_LOW
from .errors import MismatchedTimeBase

NOMINAL_COLOR = "#1f4e9c"
BAND_COLOR = "#8fb3e8"
CORRECT_COLOR = "#333333"
INCORRECT_COLOR = "#d62728"
ONE_COLOR = "#2a9d4b"
ZERO_COLOR = "#7a4fb0"


@dataclass(frozen=True)
class FigureSize:
    width: int = 720
    height: int = 360

    @classmethod
    def parse(cls, text: str) -> FigureSize:
        """``"WIDTHxHEIGHT"`` in pixels."""
        try:
            w, h = (int(x) for x in text.lower().split("x"))
        except ValueError:
            raise ValueError(f"figure size must look like 800x400, got {text!r}") from None
        if w < 100 or h < 100:
            raise ValueError("figure size must be at least 100x100")
        return cls(w, h)


def _f(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


class _Canvas:
    def __init__(self, width: int, height: int):
        self.width, self.height = width, height
        self.parts: list[str] = []

    def add(self, tag: str, text: str | None = None, **attrs) -> None:
        body = " ".join(f"{k.rstrip('_').replace('_', '-')}={quoteattr(str(v))}" for k, v in attrs.items())
        if text is None:
            self.parts.append(f"<{tag} {body}/>")
        else:
            self.parts.append(f"<{tag} {body}>{escape(text)}</{tag}>")

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif" font-size="11">')
        return "\n".join(['<?xml version="1.0" encoding="UTF-8"?>', head,
                          f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="white"/>',
                          *self.parts, "</svg>", ""])


class _Axes:
    """Maps data coordinates into a rectangle of the canvas."""

    def __init__(self, canvas: _Canvas, box: tuple[float, float, float, float],
                 xlim: tuple[float, float], ylim: tuple[float, float]):
        self.c = canvas
        self.x0, self.y0, self.w, self.h = box
        lo, hi = xlim
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        self.xlim = (lo, hi)
        self.ylim = ylim

    def px(self, x) -> np.ndarray:
        lo, hi = self.xlim
        return self.x0 + (np.asarray(x, dtype=float) - lo) / (hi - lo) * self.w

    def py(self, y) -> np.ndarray:
        lo, hi = self.ylim
        return self.y0 + self.h - (np.asarray(y, dtype=float) - lo) / (hi - lo) * self.h

    def frame(self, title: str, xlabel: str, ylabel: str, xticks: Sequence[float], xfmt=lambda v: f"{v:g}") -> None:
        c = self.c
        c.add("rect", x=_f(self.x0), y=_f(self.y0), width=_f(self.w), height=_f(self.h),
              fill="none", stroke="#000000", stroke_width="1")
        for yv in (0.0, 0.25, 0.5, 0.75, 1.0):
            y = float(self.py(yv))
            c.add("line", x1=_f(self.x0 - 4), y1=_f(y), x2=_f(self.x0), y2=_f(y), stroke="#000000")
            c.add("text", f"{yv:g}", x=_f(self.x0 - 6), y=_f(y + 4), text_anchor="end")
        for xv in xticks:
            x = float(self.px(xv))
            yb = self.y0 + self.h
            c.add("line", x1=_f(x), y1=_f(yb), x2=_f(x), y2=_f(yb + 4), stroke="#000000")
            c.add("text", xfmt(xv), x=_f(x), y=_f(yb + 16), text_anchor="middle")
        c.add("text", title, x=_f(self.x0 + self.w / 2), y=_f(self.y0 - 8), text_anchor="middle", font_size="13")
        c.add("text", xlabel, x=_f(self.x0 + self.w / 2), y=_f(self.y0 + self.h + 32), text_anchor="middle")
        c.add("text", ylabel, x=_f(self.x0 - 40), y=_f(self.y0 + self.h / 2), text_anchor="middle",
              transform=f"rotate(-90 {_f(self.x0 - 40)} {_f(self.y0 + self.h / 2)})")

    def thresholds(self) -> None:
        for yv in (LOGIC_LOW, LOGIC_HIGH):
            y = _f(float(self.py(yv)))
            self.c.add("line", x1=_f(self.x0), y1=y, x2=_f(self.x0 + self.w), y2=y,
                       stroke="#999999", stroke_dasharray="4 3", class_="threshold")

    def polyline(self, x, y, color: str, width: float = 1.5) -> None:
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(self.px(x), self.py(y)))
        self.c.add("polyline", points=pts, fill="none", stroke=color, stroke_width=f"{width:g}")

    def band(self, x, lo, hi, color: str, cls: str) -> None:
        xs = np.concatenate([self.px(x), self.px(x)[::-1]])
        ys = np.concatenate([self.py(hi), self.py(lo)[::-1]])
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(xs, ys))
        self.c.add("polygon", points=pts, fill=color, fill_opacity="0.45", stroke=color, class_=cls)


def _panel_boxes(size: FigureSize, n: int) -> tuple[int, list[tuple[float, float, float, float]]]:
    """Stack ``n`` panels vertically; each gets ``size.height`` pixels."""
    left, right, top, bottom = 70, 20, 30, 45
    total = size.height * n
    boxes = [(left, i * size.height + top, size.width - left - right, size.height - top - bottom)
             for i in range(n)]
    return total, boxes


def _ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    if hi <= lo:
        return [lo]
    return [float(v) for v in np.linspace(lo, hi, n)]


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def _write_csv(path: Path, header: Sequence[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


# --- waveform envelope ----------------------------------------------------

@dataclass
class Series:
    times: np.ndarray
    columns: dict[str, np.ndarray]


def load_series(path: Path) -> Series:
    header, data = read_waveform_csv(path)
    return Series(data[:, 0], {name: data[:, i] for i, name in enumerate(header) if i > 0})


def plot_waveforms_with_deviation(nominal: Series, corners: Sequence[Series], outputs: Sequence[str],
                                  out_dir: Path, size: FigureSize | None = None,
                                  caption: str = "") -> list[Path]:
    """Nominal ``w(t)`` per output with the min/max envelope over the corners."""
    size = size or FigureSize()
    for s in corners:
        if s.times.shape != nominal.times.shape or not np.array_equal(s.times, nominal.times):
            raise MismatchedTimeBase("corner waveform does not share the nominal time base")
    out_dir = Path(out_dir)
    t = nominal.times
    paths = []
    for name in outputs:
        stack = np.stack([nominal.columns[name]] + [s.columns[name] for s in corners])
        nom, lo, hi = stack[0], stack.min(axis=0), stack.max(axis=0)
        _write_csv(out_dir / f"waveform_{name}.csv", ["time", "nominal", "min", "max"],
                   [[repr(float(a)), repr(float(b)), repr(float(c)), repr(float(d))]
                    for a, b, c, d in zip(t, nom, lo, hi)])
        height, (box,) = _panel_boxes(size, 1)
        canvas = _Canvas(size.width, height)
        tmax = float(t[-1]) if t.size else 1.0
        ax = _Axes(canvas, box, (0.0, tmax), (0.0, 1.0))
        ax.frame(f"{name}{' ' + caption if caption else ''}", "time (s)", "state w",
                 _ticks(0.0, tmax), xfmt=lambda v: f"{v:.3g}")
        ax.thresholds()
        ax.band(t, lo, hi, BAND_COLOR, "band")
        ax.polyline(t, nom, NOMINAL_COLOR)
        paths.append(_write(out_dir / f"waveform_{name}.svg", canvas.render()))
    return paths


# --- deviation scatter ----------------------------------------------------

def plot_deviation_scatter(results: DeviationResults, table: CorrectnessTable, out_dir: Path,
                           size: FigureSize | None = None) -> list[Path]:
    """One panel per output; incorrect samples drawn red with ``class="incorrect"``."""
    size = size or FigureSize()
    out_dir = Path(out_dir)
    levels = list(results.levels)
    span = (levels[-1] - levels[0]) or 1.0
    pad = span * 0.05
    jitter_w = span / max(len(levels), 1) * 0.3
    paths = []
    for o, name in enumerate(results.outputs):
        height, (box,) = _panel_boxes(size, 1)
        canvas = _Canvas(size.width, height)
        ax = _Axes(canvas, box, (levels[0] - pad, levels[-1] + pad), (0.0, 1.0))
        ax.frame(name, "deviation level", "final w", levels, xfmt=level_label)
        ax.thresholds()
        rows = []
        for i, p in enumerate(levels):
            block = results.final_w[i]
            bad = table.incorrect[i]
            n_k, n_c = block.shape[0], block.shape[1]
            for k in range(n_k):
                for c in range(n_c):
                    w = float(block[k, c, o])
                    wrong = bool(bad[k, c, o])
                    # spread the markers of one level horizontally by sample index
                    offs = ((k * n_c + c) / max(n_k * n_c - 1, 1) - 0.5) * jitter_w
                    x = float(ax.px(p + offs))
                    y = float(ax.py(w))
                    canvas.add("circle", cx=_f(x), cy=_f(y), r="2.5",
                               fill=INCORRECT_COLOR if wrong else CORRECT_COLOR,
                               class_="incorrect" if wrong else "correct")
                    rows.append([level_label(p), k, c, repr(w), int(wrong)])
        _write_csv(out_dir / f"scatter_{name}.csv",
                   ["level", "combination", "corner_mask", "final_w", "incorrect"], rows)
        paths.append(_write(out_dir / f"scatter_{name}.svg", canvas.render()))
    return paths


# --- deviation range ------------------------------------------------------

def plot_deviation_range(rows: Sequence[RangeRow], out_dir: Path, size: FigureSize | None = None) -> Path:
    """Ribbons of [min, max] final w per expected value, one panel per output."""
    if not rows:
        raise ValueError("range table is empty")
    size = size or FigureSize()
    out_dir = Path(out_dir)
    outputs = list(dict.fromkeys(r.output for r in rows))
    levels = sorted({r.level for r in rows})
    height, boxes = _panel_boxes(size, len(outputs))
    canvas = _Canvas(size.width, height)
    span = (levels[-1] - levels[0]) or 1.0
    pad = span * 0.05
    for name, box in zip(outputs, boxes):
        ax = _Axes(canvas, box, (levels[0] - pad, levels[-1] + pad), (0.0, 1.0))
        ax.frame(name, "deviation level", "final w", levels, xfmt=level_label)
        ax.thresholds()
        for want, color in ((1, ONE_COLOR), (0, ZERO_COLOR)):
            sel = sorted((r for r in rows if r.output == name and r.expected == want), key=lambda r: r.level)
            if not sel:
                continue
            x = np.array([r.level for r in sel])
            lo = np.array([r.min_w for r in sel])
            hi = np.array([r.max_w for r in sel])
            if len(sel) == 1:
                # a single level still needs some width to be visible
                x = np.array([x[0] - pad / 2, x[0] + pad / 2])
                lo, hi = np.repeat(lo, 2), np.repeat(hi, 2)
            ax.band(x, lo, hi, color, f"ribbon-{want}")
    _write_csv(out_dir / "range.csv", ["output", "level", "expected", "min_w", "max_w"],
               [[r.output, level_label(r.level), r.expected, repr(r.min_w), repr(r.max_w)] for r in rows])
    return _write(out_dir / "range.svg", canvas.render())
