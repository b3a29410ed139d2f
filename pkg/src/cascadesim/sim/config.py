"""Architecture, workload and binding configuration for the analytical simulator."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

DESIGNS = ("unfused", "flat", "fusemax")
DESIGN_ALIASES = {"flat3pass": "flat"}
ENERGY_KEYS = ("macc_2d", "op_1d", "buffer", "dram", "register")

# Einsums of the 1-pass cascade and the array each runs on by default.
FUSEMAX_EINSUMS: dict[str, str] = {
    "BQK": "2d",
    "LM": "2d",
    "RM": "1d",
    "SLN": "2d",
    "SLD": "2d",
    "SLNV": "2d",
    "PRM": "1d",
    "SPD": "1d",
    "RD": "1d",
    "SPNV": "1d",
    "RNV": "1d",
    "AV": "1d",
}
MOVABLE_EINSUMS = frozenset({"SLN"})


class ConfigError(ValueError):
    pass


def _positive(obj, names) -> None:
    for n in names:
        v = getattr(obj, n)
        if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
            raise ConfigError(f"{type(obj).__name__}.{n} must be positive, got {v!r}")


@dataclass(frozen=True)
class EnergyTable:
    """Picojoules per action."""

    macc_2d: float = 1.0
    op_1d: float = 1.0
    buffer: float = 5.0
    dram: float = 100.0
    register: float = 0.1

    def __post_init__(self):
        for k in ENERGY_KEYS:
            if getattr(self, k) < 0:
                raise ConfigError(f"energy entry {k} must be non-negative")

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in ENERGY_KEYS}


@dataclass(frozen=True)
class ArchConfig:
    name: str = "default"
    pe_rows: int = 128
    pe_cols: int = 128
    n_1d_pes: int = 256
    global_buffer_bytes: int = 64 * 1024 * 1024
    word_bytes: int = 2
    clock_hz: float = 940e6
    dram_bw_bytes_per_cycle: float = 128
    exp_maccs: int = 6
    m0: int = 128
    p0: int = 128
    p1: int = 64
    interleave: bool = True
    sln_exp_on: str = "2d"
    flat_rows: int = 128
    energy: EnergyTable = field(default_factory=EnergyTable)

    def __post_init__(self):
        _positive(self, ("pe_rows", "pe_cols", "n_1d_pes", "global_buffer_bytes", "word_bytes",
                         "clock_hz", "dram_bw_bytes_per_cycle", "exp_maccs", "m0", "p0", "p1", "flat_rows"))
        if self.sln_exp_on not in ("2d", "1d"):
            raise ConfigError(f"sln_exp_on must be '2d' or '1d', got {self.sln_exp_on!r}")

    @property
    def pe_2d(self) -> int:
        return self.pe_rows * self.pe_cols

    @property
    def buffer_words(self) -> int:
        return self.global_buffer_bytes // self.word_bytes

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ArchConfig":
        d = dict(d)
        kw: dict[str, Any] = {}
        fm = d.pop("fusemax", {}) or {}
        for k in ("m0", "p0", "p1", "interleave", "sln_exp_on"):
            if k in fm:
                kw[k] = fm[k]
        flat = d.pop("flat", {}) or {}
        if "rows_in_flight" in flat:
            kw["flat_rows"] = flat["rows_in_flight"]
        energy = d.pop("energy_pj", None)
        if energy is not None:
            unknown = set(energy) - set(ENERGY_KEYS)
            if unknown:
                raise ConfigError(f"unknown energy entries: {sorted(unknown)}")
            kw["energy"] = EnergyTable(**energy)
        known = {f.name for f in fields(cls)}
        for k, v in d.items():
            if k not in known or k in ("energy",):
                raise ConfigError(f"unknown architecture key {k!r}")
            kw[k] = v
        return cls(**kw)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "pe_rows": self.pe_rows,
            "pe_cols": self.pe_cols,
            "n_1d_pes": self.n_1d_pes,
            "global_buffer_bytes": self.global_buffer_bytes,
            "word_bytes": self.word_bytes,
            "clock_hz": self.clock_hz,
            "dram_bw_bytes_per_cycle": self.dram_bw_bytes_per_cycle,
            "exp_maccs": self.exp_maccs,
            "fusemax": {"m0": self.m0, "p0": self.p0, "p1": self.p1,
                        "interleave": self.interleave, "sln_exp_on": self.sln_exp_on},
            "flat": {"rows_in_flight": self.flat_rows},
            "energy_pj": self.energy.as_dict(),
        }


@dataclass(frozen=True)
class WorkloadConfig:
    model: str
    b: int
    h: int
    e: int
    f: int
    seq: int
    d_model: int
    d_ff: int

    def __post_init__(self):
        _positive(self, ("b", "h", "e", "f", "seq", "d_model", "d_ff"))

    @property
    def m(self) -> int:
        return self.seq

    @property
    def p(self) -> int:
        return self.seq

    @property
    def heads(self) -> int:
        return self.b * self.h

    def with_seq(self, seq: int) -> "WorkloadConfig":
        return replace(self, seq=seq)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], seq: int | None = None) -> "WorkloadConfig":
        try:
            return cls(
                model=str(d.get("name", d.get("model", "custom"))),
                b=int(d["b"]), h=int(d["h"]), e=int(d["e"]), f=int(d["f"]),
                seq=int(seq if seq is not None else d.get("seq", 4096)),
                d_model=int(d["d_model"]), d_ff=int(d["d_ff"]),
            )
        except KeyError as exc:
            raise ConfigError(f"workload is missing {exc.args[0]!r}") from None


@dataclass(frozen=True)
class BindingPlan:
    design: str
    m0: int | None = None
    p0: int | None = None
    assignment: Mapping[str, str] = field(default_factory=dict)
    interleave: bool = True

    def validate(self, a: ArchConfig) -> None:
        if self.design not in DESIGNS:
            raise ConfigError(f"unknown design {self.design!r}")
        if self.design != "fusemax":
            return
        if self.m0 * self.p0 != a.pe_2d:
            raise ConfigError(f"fusemax needs M0*P0 = {a.pe_2d} 2D PEs, got {self.m0}*{self.p0}")
        if set(self.assignment) != set(FUSEMAX_EINSUMS):
            missing = set(FUSEMAX_EINSUMS) - set(self.assignment)
            extra = set(self.assignment) - set(FUSEMAX_EINSUMS)
            raise ConfigError(f"binding must assign every Einsum once (missing {sorted(missing)}, extra {sorted(extra)})")
        for name, arr in self.assignment.items():
            if arr not in ("2d", "1d"):
                raise ConfigError(f"{name} bound to unknown array {arr!r}")
            if arr != FUSEMAX_EINSUMS[name] and name not in MOVABLE_EINSUMS:
                raise ConfigError(f"the cost model cannot move {name} to the {arr} array")


def canonical_design(design: str) -> str:
    d = DESIGN_ALIASES.get(design, design)
    if d not in DESIGNS:
        raise ConfigError(f"unknown design {design!r}; choose from {', '.join(DESIGNS)}")
    return d


def default_binding(design: str, a: ArchConfig) -> BindingPlan:
    design = canonical_design(design)
    if design != "fusemax":
        return BindingPlan(design)
    assignment = dict(FUSEMAX_EINSUMS)
    assignment["SLN"] = a.sln_exp_on
    return BindingPlan(design, a.m0, a.p0, assignment, a.interleave)


# -- file discovery ---------------------------------------------------------

def _roots() -> list[Path]:
    return [Path.cwd(), Path(__file__).resolve().parents[3]]


def find_config_root() -> Path:
    for root in _roots():
        if (root / "configs" / "arch").is_dir():
            return root / "configs"
    raise ConfigError("no configs/ directory found in the working directory or the source tree")


def _read_json(path: Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _resolve(kind: str, name_or_path: str | Path) -> Path:
    p = Path(name_or_path)
    if p.suffix == ".json" or p.exists():
        return p
    return find_config_root() / kind / f"{name_or_path}.json"


def load_arch(name_or_path: str | Path | None = None) -> ArchConfig:
    return ArchConfig.from_dict(_read_json(_resolve("arch", name_or_path or "default")))


def load_model(name_or_path: str | Path, seq: int | None = None) -> WorkloadConfig:
    return WorkloadConfig.from_dict(_read_json(_resolve("models", name_or_path)), seq)


def list_models() -> list[str]:
    return sorted(p.stem for p in (find_config_root() / "models").glob("*.json"))
