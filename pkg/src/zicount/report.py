"""SVG small-multiple charts of rejection rates from a results CSV.

One figure per condition; panels are laid out with one row per b1 value and
one column per sample size, each panel drawing rejection rate against zero
rate with one series per test.
"""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path
from xml.sax.saxutils import escape

RESULT_COLUMNS = (
    "condition",
    "beta1",
    "gamma1",
    "n",
    "zero_rate",
    "test_name",
    "rejection_rate",
    "failures",
    "replications",
    "seed",
)

PANEL_W, PANEL_H = 720, 480
MARGIN = dict(left=70, right=170, top=50, bottom=60)
NOMINAL_ALPHA = 0.05
NULL_CONDITION = "C4"

SERIES_STYLE = {
    "poisson_b1": "#1b9e77",
    "nb_b1": "#d95f02",
    "zip_b1": "#7570b3",
    "zip_g1": "#e7298a",
    "mzip_b1": "#66a61e",
    "linear_raw_b1": "#e6ab02",
    "linear_log_b1": "#a6761d",
}


class ResultsSchemaError(ValueError):
    """The results file lacks a required column."""


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in RESULT_COLUMNS:
            if col not in header:
                raise ResultsSchemaError(f"results file {path} is missing column '{col}'")
        rows = []
        for row in reader:
            rows.append({
                "condition": row["condition"],
                "beta1": float(row["beta1"]),
                "gamma1": float(row["gamma1"]),
                "n": int(row["n"]),
                "zero_rate": float(row["zero_rate"]),
                "test_name": row["test_name"],
                "rejection_rate": float(row["rejection_rate"]),
            })
    return rows


def _nice_ceiling(value):
    for step in (0.1, 0.2, 0.25, 0.5, 1.0):
        if value <= step:
            return step
    return math.ceil(value)


class _Panel:
    def __init__(self, ox, oy, x_values, y_max):
        self.ox, self.oy = ox, oy
        self.x0 = ox + MARGIN["left"]
        self.x1 = ox + PANEL_W - MARGIN["right"]
        self.y0 = oy + PANEL_H - MARGIN["bottom"]
        self.y1 = oy + MARGIN["top"]
        lo, hi = min(x_values), max(x_values)
        if hi - lo < 1e-12:
            lo, hi = lo - 0.1, hi + 0.1
        self.lo, self.hi, self.y_max = lo, hi, y_max

    def x(self, v):
        return self.x0 + (v - self.lo) / (self.hi - self.lo) * (self.x1 - self.x0)

    def y(self, v):
        return self.y0 - v / self.y_max * (self.y0 - self.y1)


def _panel_svg(panel: _Panel, title, series, x_ticks, draw_reference):
    out = [f'<g class="panel">']
    out.append(
        f'<rect x="{panel.x0:.1f}" y="{panel.y1:.1f}" width="{panel.x1 - panel.x0:.1f}" '
        f'height="{panel.y0 - panel.y1:.1f}" fill="none" stroke="#444"/>'
    )
    out.append(
        f'<text x="{(panel.x0 + panel.x1) / 2:.1f}" y="{panel.oy + 30}" text-anchor="middle" '
        f'font-size="16">{escape(title)}</text>'
    )
    for t in x_ticks:
        px = panel.x(t)
        out.append(f'<line x1="{px:.1f}" y1="{panel.y0:.1f}" x2="{px:.1f}" y2="{panel.y0 + 5:.1f}" stroke="#444"/>')
        out.append(f'<text x="{px:.1f}" y="{panel.y0 + 20:.1f}" text-anchor="middle" font-size="12">{t:g}</text>')
    for k in range(6):
        v = panel.y_max * k / 5
        py = panel.y(v)
        out.append(f'<line x1="{panel.x0 - 5:.1f}" y1="{py:.1f}" x2="{panel.x0:.1f}" y2="{py:.1f}" stroke="#444"/>')
        out.append(f'<text x="{panel.x0 - 8:.1f}" y="{py + 4:.1f}" text-anchor="end" font-size="12">{v:.2f}</text>')
    out.append(
        f'<text x="{(panel.x0 + panel.x1) / 2:.1f}" y="{panel.y0 + 45:.1f}" text-anchor="middle" '
        f'font-size="13">Zero rate</text>'
    )
    cy = (panel.y0 + panel.y1) / 2
    out.append(
        f'<text x="{panel.ox + 18}" y="{cy:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 {panel.ox + 18} {cy:.1f})">Rejection rate</text>'
    )
    if draw_reference:
        py = panel.y(NOMINAL_ALPHA)
        out.append(
            f'<line class="reference-line" x1="{panel.x0:.1f}" y1="{py:.1f}" x2="{panel.x1:.1f}" '
            f'y2="{py:.1f}" stroke="#c00" stroke-dasharray="6,4" data-value="{NOMINAL_ALPHA}"/>'
        )
    for test, pts in series.items():
        color = SERIES_STYLE.get(test, "#333")
        pts = sorted(p for p in pts if not math.isnan(p[1]))
        if not pts:
            continue
        coords = " ".join(f"{panel.x(xv):.1f},{panel.y(yv):.1f}" for xv, yv in pts)
        if len(pts) > 1:
            out.append(f'<polyline data-test="{escape(test)}" points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for xv, yv in pts:
            out.append(f'<circle cx="{panel.x(xv):.1f}" cy="{panel.y(yv):.1f}" r="3.5" fill="{color}"/>')
    # legend
    lx = panel.x1 + 15
    for i, test in enumerate(series):
        ly = panel.y1 + 15 + 20 * i
        color = SERIES_STYLE.get(test, "#333")
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="3"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}" font-size="12">{escape(test)}</text>')
    out.append("</g>")
    return out


def condition_svg(condition: str, rows: list[dict]) -> str:
    """Render one condition's rows as an SVG document."""
    beta1s = sorted({r["beta1"] for r in rows}, reverse=True)
    ns = sorted({r["n"] for r in rows})
    tests = [t for t in SERIES_STYLE if any(r["test_name"] == t for r in rows)]
    tests += sorted({r["test_name"] for r in rows} - set(tests))
    x_values = sorted({r["zero_rate"] for r in rows})
    finite = [r["rejection_rate"] for r in rows if not math.isnan(r["rejection_rate"])]
    y_max = _nice_ceiling(max([NOMINAL_ALPHA * 2, *finite]))
    gamma1 = rows[0]["gamma1"]

    width, height = PANEL_W * len(ns), PANEL_H * len(beta1s)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<title>Rejection rates, condition {escape(condition)}</title>",
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    cells = defaultdict(lambda: defaultdict(list))
    for r in rows:
        cells[(r["beta1"], r["n"])][r["test_name"]].append((r["zero_rate"], r["rejection_rate"]))
    for i, b1 in enumerate(beta1s):
        for j, n in enumerate(ns):
            panel = _Panel(j * PANEL_W, i * PANEL_H, x_values, y_max)
            series = {t: cells[(b1, n)].get(t, []) for t in tests}
            title = f"{condition}: N = {n}, b1 = {b1:g}, g1 = {gamma1:g}"
            out.extend(_panel_svg(panel, title, series, x_values, condition == NULL_CONDITION))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_report(results_path, out_dir) -> list[Path]:
    """Write ``rejection_rates_<condition>.svg`` for each condition present."""
    rows = read_results(results_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_condition = defaultdict(list)
    for r in rows:
        by_condition[r["condition"]].append(r)
    written = []
    for cond in sorted(by_condition):
        path = out_dir / f"rejection_rates_{cond}.svg"
        path.write_text(condition_svg(cond, by_condition[cond]))
        written.append(path)
    return written
