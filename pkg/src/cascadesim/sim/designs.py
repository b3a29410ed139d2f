"""Tile-analytical cost models for the unfused, FLAT-style and FuseMax designs.

All three are evaluated per attention head and scaled by ``B*H``; heads run
back to back.  Cycle counts are integers (every component is ceil-divided);
utilization is busy cycles over total cycles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from ..counters import OpCounters
from ..ir import ceil_div
from .config import ArchConfig, BindingPlan, ConfigError, WorkloadConfig, canonical_design, default_binding
from .energy import ACTIONS, energy_breakdown


@dataclass(frozen=True)
class Phase:
    name: str
    cycles: int
    busy_2d: int
    busy_1d: int
    dram_words: int


@dataclass(frozen=True)
class SimResult:
    design: str
    model: str
    seq: int
    cycles: int
    busy_2d: int
    busy_1d: int
    dram_words: Mapping[str, int]
    buffer_highwater: int
    spilling: bool
    actions: Mapping[str, float]
    energy: Mapping[str, float]
    clock_hz: float
    word_bytes: int
    phases: tuple[Phase, ...] = ()
    op_counts: OpCounters | None = None
    steady_util2d: float | None = None
    steady_util1d: float | None = None
    notes: tuple[str, ...] = field(default=())

    @property
    def util2d(self) -> float:
        return self.busy_2d / self.cycles if self.cycles else 0.0

    @property
    def util1d(self) -> float:
        return self.busy_1d / self.cycles if self.cycles else 0.0

    @property
    def dram_bytes(self) -> int:
        return sum(self.dram_words.values()) * self.word_bytes

    @property
    def energy_pj(self) -> float:
        return sum(self.energy.values())

    @property
    def seconds(self) -> float:
        return self.cycles / self.clock_hz


def _dram_cycles(words: int, a: ArchConfig) -> int:
    return ceil_div(words * a.word_bytes, a.dram_bw_bytes_per_cycle) if words else 0


def _stream_words(k: int, m: int, p: int, a: ArchConfig) -> float:
    """Buffer reads feeding an output-stationary GEMM tiled by the 2D array."""
    return k * m * p * (1 / a.pe_rows + 1 / a.pe_cols)


def _result(design, w, a, cycles, busy2, busy1, dram, hw, spilling, actions, **kw) -> SimResult:
    actions = {k: float(actions.get(k, 0.0)) for k in ACTIONS}
    return SimResult(
        design=design, model=w.model, seq=w.seq, cycles=int(cycles), busy_2d=int(busy2), busy_1d=int(busy1),
        dram_words=dict(dram), buffer_highwater=int(hw), spilling=bool(spilling), actions=actions,
        energy=energy_breakdown(actions, a), clock_hz=a.clock_hz, word_bytes=a.word_bytes, **kw,
    )


def three_pass_op_counts(w: WorkloadConfig) -> OpCounters:
    """Undivided-deferral 3-pass softmax between the QK and AV GEMMs."""
    m, p, e, f = w.m, w.p, w.e, w.f
    per_head = OpCounters(
        mul=(e + f) * m * p,
        add=(e + f) * m * p + 2 * m * p,
        div=m * p,
        exp=m * p,
        max=m * p,
    )
    return per_head.scaled(w.heads)


def fusemax_op_counts(w: WorkloadConfig, m0: int) -> OpCounters:
    """Per-Einsum tally of the 1-pass cascade, scaled by B*H."""
    m, p, e, f = w.m, w.p, w.e, w.f
    m1 = ceil_div(m, m0)
    tally = {
        "BQK": OpCounters(mul=e * m * p, add=e * m * p),
        "LM": OpCounters(max=m * p),
        "RM": OpCounters(max=m1 * p),
        "SLN": OpCounters(add=m * p, exp=m * p),
        "SLD": OpCounters(add=m * p),
        "SLNV": OpCounters(mul=f * m * p, add=f * m * p),
        "PRM": OpCounters(add=m1 * p, exp=m1 * p),
        "SPD": OpCounters(mul=m1 * p),
        "RD": OpCounters(add=m1 * p),
        "SPNV": OpCounters(mul=f * m1 * p),
        "RNV": OpCounters(add=f * m1 * p),
        "AV": OpCounters(div=f * p),
    }
    total = OpCounters()
    for c in tally.values():
        total = total + c
    return total.scaled(w.heads)


def _fiber_rows(a: ArchConfig) -> int:
    return a.flat_rows


def flat_footprint_bytes(w: WorkloadConfig, a: ArchConfig) -> int:
    """Live bytes of one in-flight row group: its QK/A fiber, Q rows and AV accumulators."""
    return a.word_bytes * _fiber_rows(a) * (w.m + w.e + w.f)


def simulate_unfused(w: WorkloadConfig, a: ArchConfig) -> SimResult:
    n, m, p, e, f = w.heads, w.m, w.p, w.e, w.f
    x = a.exp_maccs
    fits = a.word_bytes * _fiber_rows(a) * m <= a.global_buffer_bytes

    qk_maccs = n * e * m * p
    qk_words = n * (e * p + e * m + m * p)
    qk_busy = ceil_div(qk_maccs, a.pe_2d)
    qk = Phase("QK", max(qk_busy, _dram_cycles(qk_words, a)), qk_busy, 0, qk_words)

    sm_ops = n * (x + 4) * m * p
    sm_words = n * (2 if fits else 5) * m * p
    sm_busy = ceil_div(sm_ops, a.n_1d_pes)
    sm = Phase("softmax", max(sm_busy, _dram_cycles(sm_words, a)), 0, sm_busy, sm_words)

    av_maccs = n * f * m * p
    av_words = n * (m * p + f * m + f * p)
    av_busy = ceil_div(av_maccs, a.pe_2d)
    av = Phase("AV", max(av_busy, _dram_cycles(av_words, a)), av_busy, 0, av_words)

    phases = (qk, sm, av)
    # QK: one write plus one read per softmax pass over it; spilled softmax also round-trips SN.
    dram = {"Q": n * e * p, "K": n * e * m, "V": n * f * m, "AV": n * f * p, "A": n * 2 * m * p}
    if fits:
        dram["QK"] = n * 2 * m * p
    else:
        dram["QK"] = n * 3 * m * p
        dram["SN"] = n * 2 * m * p
    assert sum(dram.values()) == sum(ph.dram_words for ph in phases)
    total_dram = sum(dram.values())
    gemm_ws = a.word_bytes * (max(e, f) * (a.pe_rows + a.pe_cols) + a.pe_2d)
    hw = max(gemm_ws, min(a.word_bytes * _fiber_rows(a) * m, a.global_buffer_bytes))
    actions = {
        "macc_2d": qk_maccs + av_maccs,
        "op_1d": sm_ops,
        "buffer": n * (_stream_words(e, m, p, a) + _stream_words(f, m, p, a) + 7 * m * p) + 2 * total_dram,
        "dram": total_dram,
        "register": 2 * (qk_maccs + av_maccs) + 2 * sm_ops,
    }
    return _result(
        "unfused", w, a, sum(ph.cycles for ph in phases), qk_busy + av_busy, sm_busy, dram, hw, not fits, actions,
        phases=phases, op_counts=three_pass_op_counts(w),
    )


def simulate_flat(w: WorkloadConfig, a: ArchConfig) -> SimResult:
    n, m, p, e, f = w.heads, w.m, w.p, w.e, w.f
    x = a.exp_maccs
    r = _fiber_rows(a)
    footprint = flat_footprint_bytes(w, a)
    spilling = footprint > a.global_buffer_bytes

    def group(rows):
        t2 = ceil_div((e + f) * m * rows, a.pe_2d)
        t1 = ceil_div((x + 4) * m * rows, a.n_1d_pes)
        spill = 4 * m * rows if spilling else 0
        return max(t2, t1, _dram_cycles(spill, a)), t2, t1, spill

    full, ragged = divmod(p, r)
    sizes = [(r, full)] + ([(ragged, 1)] if ragged else [])
    cycles = busy2 = busy1 = spill_words = 0
    for rows, count in sizes:
        t, t2, t1, s = group(rows)
        cycles += n * count * t
        busy2 += n * count * t2
        busy1 += n * count * t1
        spill_words += n * count * s

    dram = {"Q": n * e * p, "K": n * e * m, "V": n * f * m, "AV": n * f * p}
    if spilling:
        dram["QK"] = spill_words // 2
        dram["A"] = spill_words - spill_words // 2
    total_dram = sum(dram.values())
    cycles = max(cycles, _dram_cycles(total_dram, a))
    maccs = n * (e + f) * m * p
    ops1 = n * (x + 4) * m * p
    actions = {
        "macc_2d": maccs,
        "op_1d": ops1,
        "buffer": n * (_stream_words(e + f, m, p, a) + 4 * m * p) + 2 * total_dram,
        "dram": total_dram,
        "register": 2 * maccs + 2 * ops1,
    }
    notes = ("spilling QK and A to DRAM",) if spilling else ()
    return _result(
        "flat", w, a, cycles, busy2, busy1, dram, min(footprint, a.global_buffer_bytes), spilling, actions,
        phases=(Phase("fused", cycles, busy2, busy1, total_dram),), op_counts=three_pass_op_counts(w), notes=notes,
    )


@dataclass(frozen=True)
class EpochModel:
    """Per-epoch busy cycles for a full M0 x P0 tile."""

    busy_2d: int
    per_row_1d: int
    sln_1d: int
    interleave: bool
    n_1d: int
    p0: int

    def busy_1d(self, rows: int) -> int:
        return ceil_div(rows * self.per_row_1d + self.sln_1d * rows // self.p0, self.n_1d)

    def length(self, rows: int) -> int:
        b1 = self.busy_1d(rows)
        return max(self.busy_2d, b1) if self.interleave else self.busy_2d + b1


def fusemax_epoch(w: WorkloadConfig, a: ArchConfig, plan: BindingPlan) -> EpochModel:
    x = a.exp_maccs
    sln_on_2d = plan.assignment["SLN"] == "2d"
    return EpochModel(
        busy_2d=w.e + w.f + (x if sln_on_2d else 0),
        per_row_1d=5 + x + 2 * w.f,
        sln_1d=0 if sln_on_2d else x * plan.m0 * plan.p0,
        interleave=plan.interleave,
        n_1d=a.n_1d_pes,
        p0=plan.p0,
    )


def fusemax_highwater(w: WorkloadConfig, a: ArchConfig, plan: BindingPlan) -> int:
    """Q tiles for one P1 group, double-buffered K/V tiles and RNV/RD/RM state."""
    pg = a.p1 * plan.p0
    return a.word_bytes * (w.e * pg + 2 * (w.e + w.f) * plan.m0 + (w.f + 2) * pg)


def simulate_fusemax(w: WorkloadConfig, a: ArchConfig, plan: BindingPlan | None = None) -> SimResult:
    plan = plan or default_binding("fusemax", a)
    plan.validate(a)
    hw = fusemax_highwater(w, a, plan)
    if hw > a.global_buffer_bytes:
        raise ConfigError(f"fusemax tile working set of {hw} bytes does not fit the {a.global_buffer_bytes}-byte buffer")
    n, m, p, e, f = w.heads, w.m, w.p, w.e, w.f
    m0, p0 = plan.m0, plan.p0
    m1 = ceil_div(m, m0)
    group_rows = a.p1 * p0
    p2 = ceil_div(p, group_rows)
    ep = fusemax_epoch(w, a, plan)
    fill = a.pe_rows + a.pe_cols

    cycles = busy2 = busy1 = epochs = 0
    for g in range(p2):
        rows = min(group_rows, p - g * group_rows)
        full, ragged = divmod(rows, p0)
        tiles = [(p0, full)] + ([(ragged, 1)] if ragged else [])
        main = sum(cnt * m1 * ep.length(r) for r, cnt in tiles)
        b1 = sum(cnt * m1 * ep.busy_1d(r) for r, cnt in tiles)
        epi_1d = ceil_div(f * rows, a.n_1d_pes)
        epi = max(epi_1d, _dram_cycles((f + e) * rows, a))
        cycles += fill + main + epi
        busy2 += sum(cnt * m1 for _, cnt in tiles) * ep.busy_2d
        busy1 += b1 + epi_1d
        epochs += sum(cnt * m1 for _, cnt in tiles)
    cycles, busy2, busy1, epochs = n * cycles, n * busy2, n * busy1, n * epochs

    dram = {"Q": n * e * p, "K": n * p2 * e * m, "V": n * p2 * f * m, "AV": n * f * p}
    total_dram = sum(dram.values())
    cycles = max(cycles, _dram_cycles(total_dram, a))

    sln_2d = plan.assignment["SLN"] == "2d"
    maccs = n * (e + f) * m * p + (n * a.exp_maccs * m * p if sln_2d else 0)
    ops1 = n * m1 * p * ep.per_row_1d + n * f * p + (0 if sln_2d else n * a.exp_maccs * m * p)
    kv_tile = (e + f) * m0
    actions = {
        "macc_2d": maccs,
        "op_1d": ops1,
        # Q tile per epoch; K/V tiles once per m1, then held in edge registers across P1 epochs.
        "buffer": epochs * (e * p0 + kv_tile / a.p1) + 2 * total_dram,
        "dram": total_dram,
        "register": 2 * maccs + 2 * ops1 + epochs * kv_tile,
    }
    full_len = ep.length(p0)
    return _result(
        "fusemax", w, a, cycles, busy2, busy1, dram, hw, False, actions,
        phases=(Phase("epochs", cycles, busy2, busy1, total_dram),),
        op_counts=fusemax_op_counts(w, m0),
        steady_util2d=ep.busy_2d / full_len,
        steady_util1d=ep.busy_1d(p0) / full_len,
        notes=("AV epilogue not overlapped with the next P2 group",),
    )


SIMULATORS = {"unfused": simulate_unfused, "flat": simulate_flat, "fusemax": simulate_fusemax}


def simulate(design: str, w: WorkloadConfig, a: ArchConfig) -> SimResult:
    return SIMULATORS[canonical_design(design)](w, a)


def linear_weight_words(w: WorkloadConfig) -> int:
    return 3 * w.d_model * w.h * w.e + w.h * w.f * w.d_model + 2 * w.d_model * w.d_ff


def linear_activation_words(w: WorkloadConfig) -> int:
    """Each GEMM reads its input activations and writes its outputs once."""
    per_token = 4 * w.d_model + 3 * w.h * w.e + w.h * w.f + 2 * w.d_ff
    return w.b * w.seq * per_token


def simulate_end_to_end(w: WorkloadConfig, a: ArchConfig, design: str) -> SimResult:
    from ..attention.flops import linear_maccs

    att = simulate(design, w, a)
    maccs = linear_maccs(w.b, w.seq, w.d_model, w.h, w.e, w.f, w.d_ff)
    words = linear_weight_words(w) + linear_activation_words(w)
    busy = ceil_div(maccs, a.pe_2d)
    lin = Phase("linear", max(busy, _dram_cycles(words, a)), busy, 0, words)
    actions = dict(att.actions)
    actions["macc_2d"] += maccs
    actions["dram"] += words
    actions["buffer"] += 2 * words + maccs * (1 / a.pe_rows + 1 / a.pe_cols)
    actions["register"] += 2 * maccs
    dram = dict(att.dram_words)
    dram["linear"] = words
    return _result(
        att.design, w, a, att.cycles + lin.cycles, att.busy_2d + busy, att.busy_1d, dram,
        max(att.buffer_highwater, a.word_bytes * (a.pe_2d + (a.pe_rows + a.pe_cols) * w.d_model)),
        att.spilling, actions, phases=att.phases + (lin,), op_counts=att.op_counts,
        steady_util2d=att.steady_util2d, steady_util1d=att.steady_util1d, notes=att.notes,
    )
