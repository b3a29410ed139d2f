"""Sequence-length sweeps over (model, design) pairs, written as CSV."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .attention.flops import count_flops_transformer
from .sim.config import DESIGNS, ArchConfig, canonical_design, load_arch, load_model
from .sim.designs import simulate

CSV_COLUMNS = (
    "model", "design", "seq", "cycles", "util2d", "util1d",
    "dram_bytes", "buffer_highwater", "energy_pj", "spilling", "error",
)
FLOPS_COLUMNS = ("model", "seq", "attention_maccs", "linear_maccs", "attention_fraction")
DEFAULT_MODELS = ("bert", "trxl", "t5", "xlm")
DEFAULT_SEQS = tuple(1 << k for k in range(10, 21, 2))  # 1K, 4K, ..., 1M


@dataclass(frozen=True)
class SweepSpec:
    models: tuple[str, ...] = DEFAULT_MODELS
    designs: tuple[str, ...] = DESIGNS
    seqs: tuple[int, ...] = DEFAULT_SEQS
    arch: str | Path | None = None
    out: Path | None = None
    jobs: int = 1

    def __post_init__(self):
        if not self.models or not self.designs or not self.seqs:
            raise ValueError("models, designs and seqs must be non-empty")
        if list(self.seqs) != sorted(self.seqs):
            raise ValueError("seqs must be sorted ascending")
        for d in self.designs:
            canonical_design(d)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return format(x, ".9g")
    return str(x)


def _point(model: str, design: str, seq: int, arch: ArchConfig) -> dict:
    row = {"model": model, "design": design, "seq": seq}
    try:
        r = simulate(design, load_model(model, seq), arch)
    except Exception as exc:  # per-point failures become error rows
        row.update({k: "" for k in CSV_COLUMNS if k not in row})
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    row.update(
        cycles=r.cycles, util2d=r.util2d, util1d=r.util1d, dram_bytes=r.dram_bytes,
        buffer_highwater=r.buffer_highwater, energy_pj=r.energy_pj, spilling=r.spilling, error="",
    )
    return row


def run_sweep(spec: SweepSpec, arch: ArchConfig | None = None) -> list[dict]:
    """One row per point, sorted by (model, design, seq) whatever the evaluation order."""
    arch = arch or load_arch(spec.arch)
    points = [(m, canonical_design(d), s) for m in spec.models for d in spec.designs for s in spec.seqs]
    if spec.jobs > 1:
        with ThreadPoolExecutor(spec.jobs) as pool:
            rows = list(pool.map(lambda pt: _point(*pt, arch), points))
    else:
        rows = [_point(*pt, arch) for pt in points]
    return sorted(rows, key=lambda r: (r["model"], r["design"], r["seq"]))


def flops_rows(models, seqs) -> list[dict]:
    rows = []
    for m in sorted(models):
        for s in seqs:
            fb = count_flops_transformer(load_model(m, s))
            rows.append({
                "model": m, "seq": s, "attention_maccs": fb.attention_maccs,
                "linear_maccs": fb.linear_maccs, "attention_fraction": fb.attention_fraction,
            })
    return rows


def to_csv(rows, columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_sweep(spec: SweepSpec, out: Path) -> tuple[Path, Path, list[dict]]:
    out.mkdir(parents=True, exist_ok=True)
    rows = run_sweep(spec)
    sweep_path = out / "sweep.csv"
    sweep_path.write_text(to_csv(rows), encoding="utf-8")
    flops_path = out / "flops.csv"
    flops_path.write_text(to_csv(flops_rows(spec.models, spec.seqs), FLOPS_COLUMNS), encoding="utf-8")
    return sweep_path, flops_path, rows
