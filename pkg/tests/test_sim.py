import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cascadesim.attention import AttnConfig, attention_1pass
from cascadesim.sim import (
    DESIGNS,
    ArchConfig,
    ConfigError,
    WorkloadConfig,
    default_binding,
    energy_breakdown,
    energy_shares,
    flat_footprint_bytes,
    load_arch,
    load_model,
    simulate,
    simulate_end_to_end,
    simulate_flat,
    simulate_fusemax,
    simulate_unfused,
)
from cascadesim.sweep import DEFAULT_MODELS, DEFAULT_SEQS

ARCH = load_arch()
K = 1 << 10
MI = 1 << 20


def head(seq, e=64, f=64):
    return WorkloadConfig("one", 1, 1, e, f, seq, 768, 3072)


# -- configuration -----------------------------------------------------------

def test_default_arch_values():
    a = ARCH
    assert (a.pe_rows, a.pe_cols, a.n_1d_pes) == (128, 128, 256)
    assert (a.global_buffer_bytes, a.word_bytes, a.clock_hz) == (64 * MI, 2, 940e6)
    assert (a.dram_bw_bytes_per_cycle, a.exp_maccs) == (128, 6)
    assert ArchConfig.from_dict(a.to_dict()) == a


@pytest.mark.parametrize("name, h, e, d", [("bert", 12, 64, 768), ("trxl", 16, 64, 1024),
                                           ("t5", 8, 64, 512), ("xlm", 16, 128, 2048)])
def test_model_files(name, h, e, d):
    w = load_model(name, 4096)
    assert (w.b, w.h, w.e, w.f, w.d_model, w.d_ff) == (64, h, e, e, d, 4 * d)


def test_configs_found_from_any_directory(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert load_arch() == ARCH


@pytest.mark.parametrize("bad", [{"pe_rows": 0}, {"word_bytes": -2}, {"bogus": 1},
                                 {"energy_pj": {"laser": 1.0}}, {"fusemax": {"sln_exp_on": "3d"}}])
def test_bad_arch_values(bad):
    d = ARCH.to_dict()
    d.update(bad)
    with pytest.raises(ConfigError):
        ArchConfig.from_dict(d)


def test_missing_model_file():
    with pytest.raises(ConfigError):
        load_model("gpt9")


def test_fusemax_tiles_must_fill_the_array():
    a = dataclasses.replace(ARCH, m0=64)
    with pytest.raises(ConfigError):
        simulate_fusemax(head(4096), a)


def test_fusemax_tiles_must_fit_the_buffer():
    a = dataclasses.replace(ARCH, global_buffer_bytes=1 << 16)
    with pytest.raises(ConfigError, match="does not fit"):
        simulate_fusemax(head(4096), a)


def test_binding_assigns_every_einsum_once():
    plan = default_binding("fusemax", ARCH)
    plan.validate(ARCH)
    partial = dataclasses.replace(plan, assignment={k: v for k, v in plan.assignment.items() if k != "RD"})
    with pytest.raises(ConfigError):
        partial.validate(ARCH)
    moved = dataclasses.replace(plan, assignment={**plan.assignment, "BQK": "1d"})
    with pytest.raises(ConfigError):
        moved.validate(ARCH)


def test_sln_exponent_can_move_to_the_1d_array():
    a = dataclasses.replace(ARCH, sln_exp_on="1d")
    r2, r1 = simulate_fusemax(head(64 * K), ARCH), simulate_fusemax(head(64 * K), a)
    assert r1.actions["macc_2d"] < r2.actions["macc_2d"]
    assert r1.actions["op_1d"] > r2.actions["op_1d"]
    assert r1.cycles > r2.cycles


# -- unfused -----------------------------------------------------------------

def test_unfused_qk_phase():
    r = simulate_unfused(head(1024), ARCH)
    qk = r.phases[0]
    assert qk.busy_2d == 64 * 1024 * 1024 // (128 * 128)
    assert qk.cycles >= 64 * 1024 * 1024 / (128 * 128)


def test_unfused_round_trips_intermediates():
    m = p = 4096
    r = simulate_unfused(head(m), ARCH)
    assert r.dram_words["QK"] == 2 * m * p and r.dram_words["A"] == 2 * m * p


def test_unfused_softmax_phase_leaves_2d_idle():
    sm = simulate_unfused(head(4096), ARCH).phases[1]
    assert sm.name == "softmax" and sm.busy_2d == 0 and sm.busy_1d > 0


# -- flat --------------------------------------------------------------------

def test_flat_short_sequences_are_softmax_bound():
    r = simulate_flat(head(4096), ARCH)
    assert r.util2d < 0.5 and r.util1d == 1.0


def test_flat_spills_past_the_buffer_and_slows_down():
    fit, spill = simulate_flat(head(128 * K), ARCH), simulate_flat(head(256 * K), ARCH)
    assert not fit.spilling and spill.spilling
    assert spill.util1d < fit.util1d
    assert "QK" in spill.dram_words and "QK" not in fit.dram_words
    assert spill.buffer_highwater <= ARCH.global_buffer_bytes


def test_flat_with_unlimited_1d_array_is_compute_bound():
    a = dataclasses.replace(ARCH, n_1d_pes=10**12)
    assert simulate_flat(head(16 * K), a).util2d == 1.0


# -- fusemax -----------------------------------------------------------------

def test_fusemax_fill_and_drain_is_256():
    assert ARCH.pe_rows + ARCH.pe_cols == 256


def test_fusemax_single_group_cycles_closed_form():
    seq = 8192  # one P2 group of P1 * P0 rows
    w = head(seq)
    epoch = max(64 + 64 + 6, math.ceil(128 * (5 + 6 + 2 * 64) / 256))
    m1 = seq // 128
    epilogue = max(64 * seq // 256, (64 + 64) * seq * 2 // 128)
    assert simulate_fusemax(w, ARCH).cycles == 256 + m1 * 64 * epoch + epilogue


def test_fusemax_highwater_independent_of_sequence():
    assert simulate_fusemax(head(4 * K), ARCH).buffer_highwater == simulate_fusemax(head(MI), ARCH).buffer_highwater


def test_fusemax_long_sequences_keep_2d_busy():
    for seq in (64 * K, 256 * K, MI):
        r = simulate_fusemax(load_model("bert", seq), ARCH)
        assert r.util2d >= 0.9 and r.steady_util2d >= 0.9


def test_fusemax_moves_only_inputs_and_outputs():
    r = simulate_fusemax(head(MI), ARCH)
    assert set(r.dram_words) == {"Q", "K", "V", "AV"}
    assert not r.spilling


def test_fusemax_flags_the_epilogue():
    assert any("epilogue" in n for n in simulate_fusemax(head(4096), ARCH).notes)


# -- end to end --------------------------------------------------------------

def test_end_to_end_adds_identical_linear_phase():
    w = load_model("bert", 16 * K)
    lins = []
    for d in DESIGNS:
        e2e, att = simulate_end_to_end(w, ARCH, d), simulate(d, w, ARCH)
        lin = e2e.phases[-1]
        assert lin.name == "linear"
        assert e2e.cycles == att.cycles + lin.cycles
        lins.append(lin)
    assert lins[0] == lins[1] == lins[2]


@pytest.mark.parametrize("model", DEFAULT_MODELS)
def test_end_to_end_speedup_grows_with_sequence(model):
    def speedup(seq):
        w = load_model(model, seq)
        return simulate_end_to_end(w, ARCH, "flat").cycles / simulate_end_to_end(w, ARCH, "fusemax").cycles

    assert speedup(MI) > speedup(4 * K)


# -- energy ------------------------------------------------------------------

def test_energy_of_pure_compute_is_all_macc():
    shares = energy_shares({"macc_2d": 1000.0}, ARCH)
    assert shares["macc_2d"] == 1.0


def test_energy_is_counts_times_table():
    r = simulate_flat(head(4096), ARCH)
    table = ARCH.energy.as_dict()
    assert energy_breakdown(r, ARCH) == {k: r.actions[k] * table[k] for k in table}
    assert r.energy_pj == pytest.approx(sum(r.actions[k] * table[k] for k in table), rel=1e-15)


def test_fusemax_energy_is_compute_dominated_at_long_sequences():
    for seq in (64 * K, 256 * K, MI):
        s = energy_shares(simulate_fusemax(load_model("bert", seq), ARCH), ARCH)
        assert s["dram"] + s["buffer"] < 0.05


@pytest.mark.parametrize("seq", DEFAULT_SEQS)
def test_unfused_uses_more_energy_than_fusemax(seq):
    w = load_model("t5", seq)
    assert simulate_unfused(w, ARCH).energy_pj > simulate_fusemax(w, ARCH).energy_pj


# -- invariants --------------------------------------------------------------

workloads = st.builds(
    WorkloadConfig, st.just("w"), st.integers(1, 4), st.integers(1, 4), st.sampled_from([16, 32, 64, 128]),
    st.sampled_from([16, 32, 64, 128]), st.integers(1, 1 << 21), st.just(512), st.just(2048),
)


@st.composite
def archs(draw):
    rows, cols = draw(st.sampled_from([8, 16, 32, 64, 128])), draw(st.sampled_from([8, 16, 32, 64, 128]))
    return dataclasses.replace(
        ARCH, pe_rows=rows, pe_cols=cols, m0=rows, p0=cols, p1=draw(st.integers(1, 64)),
        n_1d_pes=draw(st.integers(1, 1024)), global_buffer_bytes=draw(st.integers(1 << 16, 1 << 28)),
        dram_bw_bytes_per_cycle=draw(st.sampled_from([16, 64, 128, 512])), flat_rows=draw(st.integers(1, 256)),
        interleave=draw(st.booleans()),
    )


@given(workloads, archs())
def test_cycles_respect_bandwidth_and_utilization_bounds(w, a):
    for d in DESIGNS:
        try:
            r = simulate(d, w, a)
        except ConfigError:
            assert d == "fusemax"  # tile working set larger than the buffer
            continue
        assert r.cycles * a.dram_bw_bytes_per_cycle >= r.dram_bytes
        assert 0 <= r.util2d <= 1 and 0 <= r.util1d <= 1
        assert r.spilling or r.buffer_highwater <= a.global_buffer_bytes


@given(workloads)
def test_work_conservation(w):
    u, fl, fu = (simulate(d, w, ARCH) for d in DESIGNS)
    gemm = w.heads * (w.e + w.f) * w.m * w.p
    assert u.actions["macc_2d"] == fl.actions["macc_2d"] == gemm
    # the only extra 2D work is the numerator exponent mapped onto the array
    assert fu.actions["macc_2d"] - gemm == w.heads * ARCH.exp_maccs * w.m * w.p


@given(st.lists(st.integers(1, 1 << 21), min_size=2, max_size=6))
def test_fusemax_steady_state_ignores_sequence(seqs):
    rs = [simulate_fusemax(head(s), ARCH) for s in seqs]
    assert len({(r.buffer_highwater, r.steady_util2d, r.steady_util1d) for r in rs}) == 1


@given(st.integers(1 << 16, 1 << 30), st.sampled_from([1, 2, 4]), st.integers(1, 256))
def test_spill_flag_flips_when_footprint_first_exceeds_buffer(buffer, word, rows):
    a = dataclasses.replace(ARCH, global_buffer_bytes=buffer, word_bytes=word, flat_rows=rows)
    seq, prev = 1, None
    while seq <= 1 << 24:
        w = head(seq)
        flag = simulate_flat(w, a).spilling
        assert flag == (flat_footprint_bytes(w, a) > buffer)
        if prev is not None:
            assert prev <= flag  # never flips back
        prev, seq = flag, seq * 2


@given(st.integers(1, 96), st.integers(1, 4), st.integers(1, 3), st.sampled_from([2, 4, 8]), st.data())
def test_simulated_op_counts_match_kernel_counters(seq, b, h, m0, data):
    e, f = data.draw(st.integers(1, 8)), data.draw(st.integers(1, 8))
    w = WorkloadConfig("w", b, h, e, f, seq, 64, 256)
    a = dataclasses.replace(ARCH, pe_rows=m0, pe_cols=4, m0=m0, p0=4)
    rng = np.random.default_rng(seq)
    Q, K_, V = rng.standard_normal((e, seq)), rng.standard_normal((e, seq)), rng.standard_normal((f, seq))
    kern = attention_1pass(Q, K_, V, AttnConfig(seq, seq, e, f, min(m0, seq))).counters
    assert simulate_fusemax(w, a).op_counts == kern.scaled(b * h)


def test_default_sweep_orderings():
    for model in DEFAULT_MODELS:
        for seq in DEFAULT_SEQS:
            w = load_model(model, seq)
            u, fl, fu = (simulate(d, w, ARCH) for d in ("unfused", "flat", "fusemax"))
            assert u.util2d <= fl.util2d <= fu.util2d
            assert fu.energy_pj < fl.energy_pj < u.energy_pj
