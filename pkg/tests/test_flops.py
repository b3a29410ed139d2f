from dataclasses import dataclass

from hypothesis import given
from hypothesis import strategies as st

from cascadesim.attention import attention_crossover, count_flops_transformer
from cascadesim.attention.flops import attention_maccs, linear_maccs


@dataclass(frozen=True)
class Layer:
    b: int = 1
    h: int = 12
    e: int = 64
    f: int = 64
    seq: int = 512
    d_model: int = 768
    d_ff: int = 3072


def test_bert_linear_layers_closed_form():
    seq = 512
    assert linear_maccs(1, seq, 768, 12, 64, 64, 3072) == seq * (4 * 768**2 + 2 * 768 * 3072)


def test_attention_maccs_closed_form():
    assert attention_maccs(1, 1, 64, 64, 1024, 1024) == 128 * 1024 * 1024


@given(st.integers(1, 1 << 22), st.integers(1, 1 << 22))
def test_attention_fraction_nondecreasing(s1, s2):
    lo, hi = sorted((s1, s2))
    fa = count_flops_transformer(Layer(seq=lo)).attention_fraction
    fb = count_flops_transformer(Layer(seq=hi)).attention_fraction
    assert fa <= fb


def test_attention_dominates_before_64k():
    x = attention_crossover(Layer())
    assert x is not None and x < 64 * 1024
    assert count_flops_transformer(Layer(seq=x)).attention_fraction > 0.5
    assert count_flops_transformer(Layer(seq=x // 2)).attention_fraction <= 0.5
