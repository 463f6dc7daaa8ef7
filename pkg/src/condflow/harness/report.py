"""Long-format metrics CSV and self-contained SVG line charts."""
from __future__ import annotations

import csv
import math
import os
from collections import defaultdict
from pathlib import Path
from xml.sax.saxutils import escape

from ..errors import FormatError

CSV_HEADER = ("step", "experiment_id", "task", "metric", "value")

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")
CHART_W, CHART_H = 640, 300
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 170, 36, 44


def format_value(v: float) -> str:
    """Shortest round-trip representation, so equal floats give equal bytes."""
    return repr(float(v))


class MetricsWriter:
    """Appends rows and flushes after every call, so a killed run leaves a parseable prefix."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(CSV_HEADER)
        self._flush()

    def _flush(self) -> None:
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def write(self, step: int, experiment_id: str, task: str, metrics: dict) -> None:
        for name in sorted(metrics):
            self._writer.writerow((int(step), experiment_id, task, name, format_value(metrics[name])))
        self._flush()

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(paths) -> list[dict]:
    """Rows from one or more metrics CSVs; a trailing partial line is ignored."""
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    rows = []
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                continue
            if tuple(header) != CSV_HEADER:
                raise FormatError(f"{path}: header {header} does not match {list(CSV_HEADER)}")
            for rec in reader:
                if len(rec) != len(CSV_HEADER):
                    continue
                try:
                    rows.append({"step": int(rec[0]), "experiment_id": rec[1], "task": rec[2],
                                 "metric": rec[3], "value": float(rec[4])})
                except ValueError as exc:
                    raise FormatError(f"{path}: bad row {rec}: {exc}") from exc
    return rows


def _nice_range(lo: float, hi: float) -> tuple[float, float]:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return 0.0, 1.0
    if hi - lo < 1e-12:
        pad = max(abs(lo) * 0.1, 0.5)
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _fmt_tick(v: float) -> str:
    return f"{v:.4g}"


def _chart(title: str, series: dict, y0: int) -> list[str]:
    """One chart at vertical offset ``y0``; ``series`` maps label -> [(x, y)]."""
    pw, ph = CHART_W - MARGIN_L - MARGIN_R, CHART_H - MARGIN_T - MARGIN_B
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts if math.isfinite(y)]
    x_lo, x_hi = _nice_range(min(xs), max(xs))
    y_lo, y_hi = _nice_range(min(ys, default=0.0), max(ys, default=1.0))

    def px(x):
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return y0 + MARGIN_T + ph - (y - y_lo) / (y_hi - y_lo) * ph

    out = ['<g class="chart">',
           f'<text x="{MARGIN_L}" y="{y0 + 22}" font-size="14" font-weight="bold">{escape(title)}</text>',
           f'<rect x="{MARGIN_L}" y="{y0 + MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for k in range(5):
        fx = x_lo + (x_hi - x_lo) * k / 4
        fy = y_lo + (y_hi - y_lo) * k / 4
        out.append(f'<text x="{px(fx):.2f}" y="{y0 + MARGIN_T + ph + 16}" font-size="10" '
                   f'text-anchor="middle">{_fmt_tick(fx)}</text>')
        out.append(f'<text x="{MARGIN_L - 6}" y="{py(fy) + 3:.2f}" font-size="10" '
                   f'text-anchor="end">{_fmt_tick(fy)}</text>')
    out.append(f'<text x="{MARGIN_L + pw / 2:.1f}" y="{y0 + CHART_H - 6}" font-size="11" '
               f'text-anchor="middle">step</text>')
    for i, (label, pts) in enumerate(sorted(series.items())):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in sorted(pts) if math.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        if len(pts) == 1:
            x, y = pts[0]
            out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="2.5" fill="{color}"/>')
        ly = y0 + MARGIN_T + 12 + 16 * i
        lx = MARGIN_L + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text class="legend" x="{lx + 24}" y="{ly}" font-size="11">{escape(label)}</text>')
    out.append("</g>")
    return out


def render_svg(rows: list[dict]) -> str:
    """One line chart per (task, metric), one polyline per experiment."""
    charts = defaultdict(lambda: defaultdict(list))
    for r in rows:
        charts[f"{r['task']} / {r['metric']}"][r["experiment_id"]].append((r["step"], r["value"]))
    n = max(len(charts), 1)
    height = CHART_H * n
    parts = ['<?xml version="1.0" encoding="UTF-8"?>',
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{CHART_W}" height="{height}" '
             f'viewBox="0 0 {CHART_W} {height}" font-family="sans-serif">',
             f'<rect width="{CHART_W}" height="{height}" fill="white"/>']
    if not charts:
        parts.append(f'<text class="warning" x="{CHART_W / 2}" y="{CHART_H / 2}" font-size="14" '
                     f'text-anchor="middle" fill="#b00">warning: no metric rows to plot</text>')
    for i, title in enumerate(sorted(charts)):
        parts.extend(_chart(title, charts[title], CHART_H * i))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_reports(csv_paths, svg_path) -> Path:
    svg_path = Path(svg_path)
    svg_path.parent.mkdir(parents=True, exist_ok=True)
    svg_path.write_text(render_svg(read_metrics(csv_paths)))
    return svg_path
