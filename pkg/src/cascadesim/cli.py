"""``cascadesim`` command-line front end.

Exit codes: 0 success, 1 verification or sweep-point failure, 2 usage or
parse error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from .attention import (
    VARIANTS,
    AttentionError,
    AttnConfig,
    NumericDomainError,
    expected_divides,
    max_rel_error,
    oracle_attention,
    run_variant,
)
from .counters import COUNTER_NAMES, OpCounters
from .dsl import load_cascade
from .ir import CascadeError
from .passes import analyze_passes, min_live_footprint
from .plot import KINDS, ChartSpec, SchemaError, render_charts
from .sim.config import DESIGNS, ConfigError
from .sweep import DEFAULT_MODELS, DEFAULT_SEQS, SweepSpec, to_csv, write_sweep

DEFAULT_SEED = 2024
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _params(text: str | None) -> dict[str, int]:
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        key, sep, val = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected NAME=INT, got {item!r}")
        try:
            out[key.strip()] = int(val)
        except ValueError:
            raise argparse.ArgumentTypeError(f"extent for {key.strip()} is not an integer: {val!r}") from None
    return out


def _int_list(text: str) -> list[int]:
    vals = []
    for tok in text.split(","):
        tok = tok.strip().upper()
        mult = 1
        if tok.endswith("K"):
            mult, tok = 1 << 10, tok[:-1]
        elif tok.endswith("M"):
            mult, tok = 1 << 20, tok[:-1]
        try:
            vals.append(int(tok) * mult)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a sequence length: {tok!r}") from None
    return vals


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _emit(text: str, args, name: str | None = None) -> None:
    sys.stdout.write(text)
    if name and args.out_given:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")


# -- analyze ----------------------------------------------------------------

def _cascade_path(path: str) -> Path:
    """An existing path as given, else the bundled ``cascades/`` directory."""
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    for root in (Path.cwd(), Path(__file__).resolve().parents[2]):
        cand = root / "cascades" / p.name
        if cand.exists():
            return cand
    return p


def cmd_analyze(args) -> int:
    try:
        c = load_cascade(_cascade_path(args.path))
    except FileNotFoundError:
        print(f"error: no such file: {args.path}", file=sys.stderr)
        return EXIT_USAGE
    except CascadeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = analyze_passes(c)
    try:
        fp = min_live_footprint(c, args.params)
    except CascadeError:
        fp = None
    if args.csv:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["tensor", "rank", "passes", "boundaries"])
        for e in report.entries:
            wr.writerow([e.tensor, e.rank, e.passes, " ".join(f"{u}>{v}" for u, v in e.boundaries)])
        wr.writerow([])
        wr.writerow(["tensor", "resident_ranks", "elements"])
        if fp is not None:
            for f in fp.entries:
                wr.writerow([f.tensor, " ".join(f.resident_ranks), f.elements])
            wr.writerow(["*", "", fp.aggregate])
        _emit(buf.getvalue(), args, "analyze.csv")
        return EXIT_OK
    lines = [f"cascade {c.name or args.path}", "passes:"]
    for e in report.entries:
        where = ", ".join(f"einsum {u} -> {v}" for u, v in e.boundaries) or "none"
        lines.append(f"  {e.tensor}[{e.rank}]: {e.passes} pass{'es' if e.passes != 1 else ''} (boundaries: {where})")
    lines.append("live footprint:")
    if fp is None:
        lines.append("  unavailable: pass --params to bind rank extents")
    else:
        for f in fp.entries:
            ranks = ",".join(f.resident_ranks) or "-"
            lines.append(f"  {f.tensor}: resident [{ranks}] = {f.elements} element(s)")
        lines.append(f"  aggregate: {fp.aggregate} element(s)")
    _emit("\n".join(lines) + "\n", args, "analyze.txt")
    return EXIT_OK


# -- verify -----------------------------------------------------------------

VERIFY_COLUMNS = ("variant", "m", "p", "e", "f", "m0", "trials", "max_rel_err", *COUNTER_NAMES,
                  "any_nan", "any_inf", "status")


def _variant_name(args) -> str:
    name = args.variant
    if args.defer_division and not name.endswith("-deferred"):
        if name not in ("3pass", "2pass"):
            raise AttentionError("--defer-division applies to 3pass and 2pass only")
        name += "-deferred"
    return name


def cmd_verify(args) -> int:
    try:
        name = _variant_name(args)
        cfg = AttnConfig(args.m, args.p, args.e, args.f, args.m0, args.precision)
    except AttentionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    nan = inf = False
    counters = OpCounters()
    failed_domain = False
    compared = 0
    for _ in range(args.trials):
        Q = rng.standard_normal((cfg.e, cfg.p)) * args.logit_scale
        K = rng.standard_normal((cfg.e, cfg.m))
        V = rng.standard_normal((cfg.f, cfg.m))
        try:
            r = run_variant(name, Q, K, V, cfg, backend=args.backend)
        except NumericDomainError as exc:
            print(f"error: {exc}", file=sys.stderr)
            failed_domain = True
            break
        counters = r.counters
        nan |= r.any_nan
        inf |= r.any_inf
        if r.stable:
            ref_q = Q / np.sqrt(cfg.e) if name == "naive" else Q
            ref = oracle_attention(ref_q, K, V, AttnConfig(cfg.m, cfg.p, cfg.e, cfg.f, cfg.m0, cfg.precision))
            worst = max(worst, max_rel_error(r.output, ref.output))
            compared += 1
    if failed_domain:
        status = "fail"
    elif nan or inf:
        status = "unstable" if name == "naive" else "fail"
    else:
        status = "ok" if worst <= args.tol else "fail"
    row = {
        "variant": name, "m": cfg.m, "p": cfg.p, "e": cfg.e, "f": cfg.f, "m0": cfg.tile,
        "trials": args.trials, "max_rel_err": format(worst, ".3e") if compared else "nan", **counters.as_dict(),
        "any_nan": str(nan).lower(), "any_inf": str(inf).lower(), "status": status,
    }
    if args.csv:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(VERIFY_COLUMNS)
        wr.writerow([row[c] for c in VERIFY_COLUMNS])
        _emit(buf.getvalue(), args, "verify.csv")
    else:
        lines = [
            f"variant {name}: M={cfg.m} P={cfg.p} E={cfg.e} F={cfg.f} M0={cfg.tile} trials={args.trials}",
            f"  max relative error vs oracle: {row['max_rel_err']} (tolerance {args.tol:g})",
            "  counters: " + " ".join(f"{k}={v}" for k, v in counters.as_dict().items()),
            f"  expected divides: {expected_divides(name, cfg)}",
            f"  nan={row['any_nan']} inf={row['any_inf']} status={status}",
        ]
        _emit("\n".join(lines) + "\n", args, "verify.txt")
    return EXIT_OK if status in ("ok", "unstable") else EXIT_FAIL


# -- sweep / plot -----------------------------------------------------------

def cmd_sweep(args) -> int:
    try:
        spec = SweepSpec(
            models=tuple(args.models), designs=tuple(args.designs), seqs=tuple(args.seqs),
            arch=args.arch, jobs=args.jobs,
        )
        sweep_path, flops_path, rows = write_sweep(spec, Path(args.out))
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    failures = [r for r in rows if r["error"]]
    if args.csv:
        sys.stdout.write(to_csv(rows))
    else:
        print(f"wrote {len(rows)} rows to {sweep_path}")
        print(f"wrote MACC breakdown to {flops_path}")
    for r in failures:
        print(f"error: {r['model']}/{r['design']}/{r['seq']}: {r['error']}", file=sys.stderr)
    return EXIT_FAIL if failures else EXIT_OK


def cmd_plot(args) -> int:
    try:
        kinds = KINDS if args.kind == "all" else (args.kind,)
        paths = []
        for kind in kinds:
            src = args.csv_path
            if kind == "flop-breakdown" and args.kind == "all":
                src = Path(args.csv_path).with_name("flops.csv")
            paths += render_charts(src, ChartSpec(kind, args.baseline), args.out)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for p in paths:
        print(p)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS
    p.add_argument("--csv", action="store_true", default=d if suppress else False,
                   help="machine-readable CSV on stdout")
    p.add_argument("--out", default=d if suppress else None, help="output directory")
    p.add_argument("--seed", type=int, default=d if suppress else DEFAULT_SEED,
                   help=f"random seed (default {DEFAULT_SEED})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cascadesim", description="Cascade analysis, attention kernels and "
                                     "accelerator simulation.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="{analyze,verify,sweep,plot}")
    sub.required = True

    a = sub.add_parser("analyze", help="pass counts and live footprint of a cascade file")
    _global_flags(a, suppress=True)
    a.add_argument("path")
    a.add_argument("--params", type=_params, default={}, help="rank extents, e.g. M=64,P=64")
    a.set_defaults(func=cmd_analyze)

    v = sub.add_parser("verify", help="compare an attention variant against the oracle")
    _global_flags(v, suppress=True)
    v.add_argument("--variant", required=True, choices=list(VARIANTS))
    v.add_argument("--defer-division", action="store_true")
    v.add_argument("--m", type=int, default=64)
    v.add_argument("--p", type=int, default=64)
    v.add_argument("--e", type=int, default=16)
    v.add_argument("--f", type=int, default=16)
    v.add_argument("--m0", type=int, default=None)
    v.add_argument("--trials", type=int, default=10)
    v.add_argument("--logit-scale", type=float, default=1.0, help="multiplies Q to push logits up")
    v.add_argument("--precision", choices=("double", "single"), default="double")
    v.add_argument("--backend", choices=("jit", "numpy"), default=None)
    v.add_argument("--tol", type=float, default=1e-10)
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="simulate designs over sequence lengths")
    _global_flags(s, suppress=True)
    s.add_argument("--models", type=_str_list, default=list(DEFAULT_MODELS))
    s.add_argument("--designs", type=_str_list, default=list(DESIGNS))
    s.add_argument("--seqs", type=_int_list, default=list(DEFAULT_SEQS), help="e.g. 4K,16K,1M")
    s.add_argument("--arch", default=None, help="architecture name or JSON path")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    pl = sub.add_parser("plot", help="render SVG charts from a sweep CSV")
    _global_flags(pl, suppress=True)
    pl.add_argument("csv_path")
    pl.add_argument("--kind", choices=(*KINDS, "all"), default="all")
    pl.add_argument("--baseline", default="unfused")
    pl.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.out_given = args.out is not None
    if args.out is None:
        args.out = "results" if args.command in ("sweep", "plot") else "."
    try:
        return args.func(args)
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
