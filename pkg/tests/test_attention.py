import json
import math
import random
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cascadesim.attention import (
    STABLE_VARIANTS,
    VARIANTS,
    AttnConfig,
    NumericDomainError,
    ShapeError,
    attention_1pass,
    attention_2pass,
    attention_3pass,
    attention_naive,
    expected_counters,
    expected_divides,
    max_rel_error,
    oracle_attention,
    run_variant,
)
from cascadesim.attention.oracle import dot2, sum2

GOLDEN = json.loads((Path(__file__).parent / "data" / "golden_attention.json").read_text())
BACKENDS = ("jit", "numpy")


def instance(rng, m, p, e, f, sigma=5.0):
    """Logits distributed as N(0, sigma^2)."""
    Q = rng.standard_normal((e, p)) * (sigma / math.sqrt(e))
    return Q, rng.standard_normal((e, m)), rng.standard_normal((f, m))


# -- oracle ------------------------------------------------------------------

def test_sum2_recovers_cancelled_terms():
    x = np.array([[1e16, 1.0, -1e16, 3.0]]).T
    assert sum2(x)[0] == 4.0


def test_dot2_matches_exact_rationals():
    rnd = random.Random(3)
    x = [rnd.uniform(-1e8, 1e8) for _ in range(50)] + [1e20, -1e20]
    y = [rnd.uniform(-1, 1) for _ in range(50)] + [1.0, 1.0]
    exact = sum(Fraction(a) * Fraction(b) for a, b in zip(x, y))
    got = dot2(np.array(x)[:, None], np.array(y)[:, None])[0]
    assert abs(Fraction(got) - exact) <= abs(exact) * Fraction(1, 2**50)


@pytest.mark.parametrize("variant", STABLE_VARIANTS)
@pytest.mark.parametrize("backend", BACKENDS)
def test_golden_values(variant, backend):
    g = GOLDEN
    Q, K, V = (np.array(g[k]) for k in "QKV")
    cfg = AttnConfig(g["m"], g["p"], g["e"], g["f"], m0=3)
    out = run_variant(variant, Q, K, V, cfg, backend=backend).output
    np.testing.assert_allclose(out, np.array(g["AV"]), rtol=1e-12, atol=1e-15)


def test_oracle_golden():
    g = GOLDEN
    Q, K, V = (np.array(g[k]) for k in "QKV")
    np.testing.assert_allclose(oracle_attention(Q, K, V).output, np.array(g["AV"]), rtol=1e-14, atol=1e-16)


# -- equivalence -------------------------------------------------------------

shapes = st.tuples(st.integers(1, 128), st.integers(1, 128), st.integers(1, 32), st.integers(1, 32))


@given(shapes, st.data())
def test_stable_variants_match_oracle(shape, data):
    m, p, e, f = shape
    m0 = data.draw(st.integers(1, m))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    Q, K, V = instance(rng, m, p, e, f)
    cfg = AttnConfig(m, p, e, f, m0)
    ref = oracle_attention(Q, K, V, cfg).output
    for v in STABLE_VARIANTS:
        r = run_variant(v, Q, K, V, cfg, backend=data.draw(st.sampled_from(BACKENDS)))
        assert max_rel_error(r.output, ref) <= 1e-10, v


@given(shapes, st.data())
def test_single_precision_matches_oracle(shape, data):
    m, p, e, f = shape
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    Q, K, V = instance(rng, m, p, e, f)
    cfg = AttnConfig(m, p, e, f, data.draw(st.integers(1, m)), precision="single")
    ref = oracle_attention(Q, K, V, cfg).output
    for v in STABLE_VARIANTS:
        assert max_rel_error(run_variant(v, Q, K, V, cfg).output, ref) <= 1e-3, v


# -- structural invariants ---------------------------------------------------

def _keep(variant, rng, m=40, p=9, e=6, f=5, m0=7):
    Q, K, V = instance(rng, m, p, e, f)
    return run_variant(variant, Q, K, V, AttnConfig(m, p, e, f, m0), intermediates=True), (Q, K, V)


def test_softmax_columns_sum_to_one(rng):
    r, (Q, K, V) = _keep("3pass", rng)
    np.testing.assert_allclose(r.intermediates["A"].sum(axis=0), 1.0, atol=1e-12)
    o = oracle_attention(Q, K, V)
    np.testing.assert_allclose(o.intermediates["A"].sum(axis=0), 1.0, atol=1e-12)


@pytest.mark.parametrize("variant, key", [("3pass", "SN"), ("2pass", "SLN"), ("1pass", "SLN")])
def test_numerators_lie_in_unit_interval(rng, variant, key):
    r, _ = _keep(variant, rng)
    vals = r.intermediates[key]
    arr = np.concatenate([np.ravel(x) for x in vals]) if isinstance(vals, list) else np.ravel(vals)
    assert np.all(arr > 0) and np.all(arr <= 1)


@given(st.integers(0, 2**32 - 1), st.integers(1, 16))
def test_running_max_never_decreases(seed, m0):
    r, _ = _keep("1pass", np.random.default_rng(seed), m0=m0)
    rm = r.intermediates["RM"]
    assert np.all(np.diff(rm, axis=0) >= 0)


@given(shapes, st.data())
def test_division_count_law(shape, data):
    m, p, e, f = shape
    cfg = AttnConfig(m, p, e, f, data.draw(st.integers(1, m)))
    Q, K, V = instance(np.random.default_rng(0), m, p, e, f)
    for v in VARIANTS:
        r = run_variant(v, Q, K, V, cfg)
        assert r.counters.div == expected_divides(v, cfg)
        assert r.counters == expected_counters(v, cfg)
    assert expected_divides("3pass-deferred", cfg) == f * p
    assert expected_divides("3pass", cfg) == m * p


def test_one_pass_exponentials_are_numerator_plus_correction(rng):
    m, p, e, f, m0 = 50, 6, 4, 4, 8
    Q, K, V = instance(rng, m, p, e, f)
    r = attention_1pass(Q, K, V, AttnConfig(m, p, e, f, m0))
    m1 = math.ceil(m / m0)
    assert r.counters.exp == m * p + m1 * p


@given(st.integers(0, 2**32 - 1), st.sampled_from(STABLE_VARIANTS))
def test_permuting_keys_and_values_together(seed, variant):
    rng = np.random.default_rng(seed)
    m, p, e, f = 33, 5, 4, 3
    Q, K, V = instance(rng, m, p, e, f)
    perm = rng.permutation(m)
    cfg = AttnConfig(m, p, e, f, 8)
    a = run_variant(variant, Q, K, V, cfg).output
    b = run_variant(variant, Q, K[:, perm], V[:, perm], cfg).output
    assert max_rel_error(b, a) <= 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(1, 33), st.integers(1, 33))
def test_tile_size_does_not_change_output(seed, t1, t2):
    rng = np.random.default_rng(seed)
    Q, K, V = instance(rng, 33, 4, 5, 3)
    for v in ("2pass", "1pass"):
        a = run_variant(v, Q, K, V, AttnConfig(33, 4, 5, 3, t1)).output
        b = run_variant(v, Q, K, V, AttnConfig(33, 4, 5, 3, t2)).output
        assert max_rel_error(a, b) <= 1e-10


# -- stability ---------------------------------------------------------------

def test_large_logits_overflow_naive_only():
    m, p, e, f = 16, 4, 4, 3
    Q = np.full((e, p), math.sqrt(1000 / e))
    K = np.full((e, m), math.sqrt(1000 / e)) * math.sqrt(e)  # naive sees 1000 after its 1/sqrt(E) scale
    V = np.random.default_rng(1).standard_normal((f, m))
    assert not attention_naive(Q, K, V).stable
    uniform = V.mean(axis=1, keepdims=True) * np.ones((1, p))
    for v in STABLE_VARIANTS:
        r = run_variant(v, Q, K, V, AttnConfig(m, p, e, f, 5))
        assert r.stable
        assert max_rel_error(r.output, uniform) <= 1e-12


# -- backends and errors -----------------------------------------------------

@pytest.mark.parametrize("variant", VARIANTS)
def test_backends_agree(rng, variant):
    Q, K, V = instance(rng, 29, 11, 6, 5)
    cfg = AttnConfig(29, 11, 6, 5, 6)
    a = run_variant(variant, Q, K, V, cfg, backend="jit")
    b = run_variant(variant, Q, K, V, cfg, backend="numpy")
    assert a.counters == b.counters
    assert max_rel_error(a.output, b.output) <= 1e-13


def test_env_flag_selects_numpy(monkeypatch, rng):
    Q, K, V = instance(rng, 8, 3, 2, 2)
    monkeypatch.setenv("CASCADESIM_DISABLE_JIT", "1")
    assert attention_3pass(Q, K, V).backend == "numpy"
    monkeypatch.delenv("CASCADESIM_DISABLE_JIT")
    assert attention_3pass(Q, K, V).backend == "jit"


def test_intermediates_force_numpy(rng):
    Q, K, V = instance(rng, 8, 3, 2, 2)
    r = attention_2pass(Q, K, V, AttnConfig(8, 3, 2, 2, 3), intermediates=True, backend="jit")
    assert r.backend == "numpy" and "LM" in r.intermediates


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        attention_3pass(np.ones((3, 4)), np.ones((2, 5)), np.ones((2, 5)))


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("variant", STABLE_VARIANTS)
def test_non_finite_denominator_raises(backend, variant):
    Q = np.ones((2, 3))
    Q[0, 0] = np.nan
    with pytest.raises(NumericDomainError):
        run_variant(variant, Q, np.ones((2, 4)), np.ones((2, 4)), AttnConfig(4, 3, 2, 2, 2), backend=backend)


def test_unknown_variant():
    with pytest.raises(ValueError):
        run_variant("4pass", np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)))
