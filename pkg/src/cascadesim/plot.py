"""Static SVG line charts rendered from sweep CSVs.

Output is a pure function of the input rows: fixed canvas, fixed palette,
fixed number formatting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

from .sweep import CSV_COLUMNS, FLOPS_COLUMNS, read_csv

KINDS = ("utilization", "speedup", "energy-ratio", "flop-breakdown")
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 40, 50


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class ChartSpec:
    kind: str
    baseline: str = "unfused"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown chart kind {self.kind!r}; choose from {', '.join(KINDS)}")


def _seq_label(s: int) -> str:
    if s >= 1 << 20 and s % (1 << 20) == 0:
        return f"{s >> 20}M"
    if s >= 1 << 10 and s % (1 << 10) == 0:
        return f"{s >> 10}K"
    return str(s)


def _nice_max(v: float) -> float:
    if v <= 0:
        return 1.0
    mag = 10 ** math.floor(math.log10(v))
    for step in (1, 2, 2.5, 5, 10):
        if step * mag >= v:
            return step * mag
    return 10 * mag


def line_chart(title: str, ylabel: str, series: list[tuple[str, list[tuple[int, float]]]],
               ymax: float | None = None) -> str:
    """Lines over a log2 sequence-length axis."""
    xs = sorted({x for _, pts in series for x, _ in pts})
    if not xs:
        raise SchemaError("no data points to plot")
    ys = [y for _, pts in series for _, y in pts]
    top = ymax if ymax is not None else _nice_max(max(ys))
    lo, hi = math.log2(xs[0]), math.log2(xs[-1])
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(x):
        return LEFT + (pw * (math.log2(x) - lo) / (hi - lo) if hi > lo else pw / 2)

    def py(y):
        return TOP + ph * (1 - y / top)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
        'font-family="sans-serif" font-size="11">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>',
    ]
    for x in xs:
        out.append(f'<text x="{px(x):.1f}" y="{TOP + ph + 16}" text-anchor="middle">{_seq_label(x)}</text>')
    for i in range(6):
        y = top * i / 5
        out.append(f'<line x1="{LEFT - 4}" y1="{py(y):.1f}" x2="{LEFT + pw}" y2="{py(y):.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{LEFT - 8}" y="{py(y) + 4:.1f}" text-anchor="end">{y:.3g}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{H - 12}" text-anchor="middle">sequence length</text>')
    out.append(f'<text transform="translate(18 {TOP + ph / 2:.1f}) rotate(-90)" text-anchor="middle">'
               f'{escape(ylabel)}</text>')
    for i, (label, pts) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = sorted(pts)
        path = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in pts)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in pts:
            out.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="3" fill="{color}"/>')
        ly = TOP + 14 * i + 6
        out.append(f'<line x1="{LEFT + pw + 12}" y1="{ly}" x2="{LEFT + pw + 32}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 36}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _check(rows: list[dict], columns) -> None:
    if not rows:
        raise SchemaError("CSV has no rows")
    missing = [c for c in columns if c not in rows[0]]
    if missing:
        raise SchemaError(f"CSV is missing columns: {', '.join(missing)}")


def _ok(rows):
    return [r for r in rows if not r.get("error")]


def _by(rows, model, design):
    return {int(r["seq"]): r for r in rows if r["model"] == model and r["design"] == design}


def chart_utilization(rows, model: str) -> str:
    designs = sorted({r["design"] for r in rows if r["model"] == model})
    series = []
    for d in designs:
        pts = _by(rows, model, d)
        series.append((f"{d} 2D", [(s, float(r["util2d"])) for s, r in pts.items()]))
        series.append((f"{d} 1D", [(s, float(r["util1d"])) for s, r in pts.items()]))
    return line_chart(f"{model}: PE array utilization", "utilization", series, ymax=1.0)


def chart_ratio(rows, model: str, kind: str, baseline: str) -> str:
    base = _by(rows, model, baseline)
    if not base:
        raise SchemaError(f"baseline design {baseline!r} has no rows for {model}")
    column, label = ("cycles", "speedup") if kind == "speedup" else ("energy_pj", "energy ratio")
    series = []
    for d in sorted({r["design"] for r in rows if r["model"] == model}):
        pts = []
        for s, r in _by(rows, model, d).items():
            if s in base:
                b, v = float(base[s][column]), float(r[column])
                pts.append((s, b / v if kind == "speedup" else v / b))
        series.append((d, pts))
    return line_chart(f"{model}: {label} vs {baseline}", label, series)


def chart_flops(rows, model: str) -> str:
    pts = [(int(r["seq"]), float(r["attention_fraction"])) for r in rows if r["model"] == model]
    lin = [(s, 1 - f) for s, f in pts]
    return line_chart(f"{model}: share of layer MACCs", "fraction", [("attention", pts), ("linear", lin)], ymax=1.0)


def render_charts(csv_path: str | Path, spec: ChartSpec, out_dir: str | Path) -> list[Path]:
    """Write one SVG per model; returns the paths in model order."""
    rows = read_csv(csv_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if spec.kind == "flop-breakdown":
        _check(rows, FLOPS_COLUMNS)
    else:
        _check(rows, CSV_COLUMNS)
        rows = _ok(rows)
        if spec.kind != "utilization" and spec.baseline not in {r["design"] for r in rows}:
            raise SchemaError(f"baseline design {spec.baseline!r} is not in the sweep")
    paths = []
    for model in sorted({r["model"] for r in rows}):
        if spec.kind == "utilization":
            svg = chart_utilization(rows, model)
        elif spec.kind == "flop-breakdown":
            svg = chart_flops(rows, model)
        else:
            svg = chart_ratio(rows, model, spec.kind, spec.baseline)
        path = out_dir / f"{model}_{spec.kind}.svg"
        path.write_text(svg, encoding="utf-8")
        paths.append(path)
    return paths
