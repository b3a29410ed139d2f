import pytest
from hypothesis import given
from hypothesis import strategies as st

from cascadesim import CascadeValidationError, DSLSyntaxError, parse_cascade, render_cascade
from cascadesim.ir import Affine, ComputeOp, Filtered, Map, MergeOp, Unary, Var
from conftest import CASCADES, CORPUS

EQ2 = """\
rank M
rank N
rank K
input A[K, M]
input B[K, N]
output Z[M, N]
Z[m,n] = sum[k]( A[k,m] * B[k,n] )
"""


def test_matrix_multiply_parses_to_one_sum_reduction():
    c = parse_cascade(EQ2)
    assert len(c.einsums) == 1
    (e,) = c.body
    assert [(r.var, r.op, r.merge) for r in e.reductions] == [("k", ComputeOp.ADD, MergeOp.UNION)]
    assert isinstance(e.expr, Map) and e.expr.op is ComputeOp.MUL


def test_declarations_only_gives_empty_cascade():
    c = parse_cascade("rank K\ninput A[K]\n")
    assert c.einsums == ()


def test_one_pass_attention_shape(cascade):
    c = cascade("attn_1pass.cas")
    assert (len(c.init), len(c.body)) == (5, 12)
    assert [(it.var, it.stop) for it in c.iterative] == [("m1", "M1")]


def test_matrix_multiply_renders_to_one_line():
    out = render_cascade(parse_cascade(EQ2))
    assert "Z[m,n] = sum[k]( A[k,m] * B[k,n] )" in out


def test_cascade1_renders_both_einsums_in_order(cascade):
    text = render_cascade(cascade("cascade1.cas"))
    y, z = text.index("Y = sum[k]"), text.index("Z = sum[k]")
    assert y < z


def test_iterative_rank_keeps_stop_clause(cascade):
    assert "iter i < K:" in render_cascade(cascade("cascade3_iterative.cas"))


@pytest.mark.parametrize("name", CORPUS)
def test_corpus_round_trip(cascade, name):
    c = cascade(name)
    assert parse_cascade(render_cascade(c)) == c


@pytest.mark.parametrize("name", CORPUS)
def test_parsing_is_deterministic(name):
    text = (CASCADES / name).read_bytes().decode("utf-8")
    assert parse_cascade(text) == parse_cascade(text)


SYMBOLS = {
    "cascade1.cas": {"A", "B", "Y", "Z"},
    "cascade2.cas": {"A", "B", "Y", "X", "Z"},
    "cascade3_iterative.cas": {"A", "B", "RY", "RZ", "Z"},
    "attn_naive.cas": {"Q", "K", "V", "QK", "SN", "SD", "A", "AV", "S"},
    "attn_3pass.cas": {"Q", "K", "V", "QK", "GM", "SN", "SD", "A", "AV"},
    "attn_2pass.cas": {"Q", "K", "V", "BK", "BV", "BQK", "LM", "SLN", "SLD", "GM", "PLM", "SN", "SD", "SNV", "AV"},
    "attn_1pass.cas": {"Q", "K", "V", "BK", "BV", "BQK", "LM", "RM", "SLN", "SLD", "SLNV",
                       "PRM", "SPD", "RD", "SPNV", "RNV", "AV"},
}


@pytest.mark.parametrize("name", sorted(SYMBOLS))
def test_every_symbol_has_exactly_one_declaration(cascade, name):
    c = cascade(name)
    declared = [t.name for t in c.tensors]
    assert len(declared) == len(set(declared))
    used = {r.name for e in c.einsums for r in _refs(e)}
    assert used <= set(declared)
    assert SYMBOLS[name] <= set(declared)


def _refs(e):
    from cascadesim.ir import tensor_refs

    return [e.output, *tensor_refs(e.expr)]


def test_sub_then_exp_and_divide_get_their_merges():
    c = parse_cascade(
        "rank M\ninput X[M]\ninput G[]\ninput D[]\ntensor S[M]\noutput Y[M]\n"
        "S[m] = exp(X[m] - G)\nY[m] = S[m] / D\n"
    )
    s, y = c.body
    assert (s.expr.op, s.expr.merge) == (ComputeOp.SUB_EXP, MergeOp.PASS_THROUGH)
    assert (y.expr.op, y.expr.merge) == (ComputeOp.DIV, MergeOp.RIGHT_GATED)


def test_filter_subscript():
    c = parse_cascade(
        "rank K\nrank I = K\ninput A[K]\noutput S[I]\n"
        "iter i < K:\n  S[i] = sum[k]( A[k:k<=i] )\n"
    )
    (e,) = c.body
    (ref,) = [r for r in _refs(e) if r.name == "A"]
    assert ref.subscripts == (Filtered("k", "<=", Var("i")),)


def test_affine_subscript_in_tiled_cascade(cascade):
    c = cascade("attn_1pass.cas")
    subs = [s for e in c.einsums for r in _refs(e) for s in r.subscripts]
    assert any(isinstance(s, Affine) for s in subs)


def test_unary_negation_and_user_op():
    c = parse_cascade("rank M\ninput X[M]\noutput Y[M]\nY[m] = relu(-X[m])\n")
    (e,) = c.body
    assert isinstance(e.expr, Unary) or isinstance(e.expr, Map)
    assert "relu" in render_cascade(c)


@pytest.mark.parametrize(
    "text, line",
    [
        ("rank K\ninput A[K]\noutput Z[]\nZ = sum[k]( A[k] * )\n", 4),
        ("rank K\ninput A[K]\noutput Z[]\n\nZ = sum[k]( A[k] $ 2 )\n", 5),
        ("rank K\ninput A[K\n", 2),
    ],
)
def test_syntax_errors_carry_line_and_column(text, line):
    with pytest.raises(DSLSyntaxError) as info:
        parse_cascade(text)
    assert info.value.line == line
    assert info.value.column >= 1
    assert f"line {line}," in str(info.value)


def test_validation_error_names_einsum_and_rule():
    with pytest.raises(CascadeValidationError) as info:
        parse_cascade("rank K\ninput A[K]\noutput Z[]\nZ = sum[k]( A[k, k] )\n")
    assert any(d.rule == "arity" and d.index == 0 for d in info.value.diagnostics)


def test_unresolved_extents_do_not_block_parsing(cascade):
    c = cascade("attn_3pass.cas")
    assert c.resolve_extents(None, strict=False).get("M") is None


# -- generated round trips ---------------------------------------------------

VARS = {"I": "i", "J": "j", "K": "k"}
INPUTS = {"A": ("I", "K"), "B": ("K", "J"), "C": ("I", "J"), "D": ("K",)}


def _leaf(name):
    return f"{name}[{', '.join(VARS[r] for r in INPUTS[name])}]"


@st.composite
def expressions(draw, depth=0):
    if depth >= 2 or draw(st.booleans()):
        return _leaf(draw(st.sampled_from(sorted(INPUTS))))
    op = draw(st.sampled_from(["*", "+", "-", "/", "max", "exp"]))
    a, b = draw(expressions(depth + 1)), draw(expressions(depth + 1))
    if op == "max":
        return f"max({a}, {b})"
    if op == "exp":
        return f"exp({a} - {b})"
    return f"({a} {op} {b})"


@given(expressions(), st.sampled_from([(), ("I",), ("I", "J")]), st.sampled_from(["sum", "max"]))
def test_generated_einsums_round_trip(expr, out_ranks, reduce_op):
    import re

    used = {v for v in re.findall(r"\[([^\]]*)\]", expr) for v in v.replace(" ", "").split(",")}
    out_vars = [VARS[r] for r in out_ranks if VARS[r] in used]
    out_ranks = tuple(r for r in out_ranks if VARS[r] in used)
    reduced = sorted(used - set(out_vars))
    rhs = f"{reduce_op}[{', '.join(reduced)}]( {expr} )" if reduced else expr
    lhs = f"Z[{', '.join(out_vars)}]" if out_vars else "Z"
    decls = "".join(f"rank {r}\n" for r in VARS) + "".join(
        f"input {n}[{', '.join(rs)}]\n" for n, rs in INPUTS.items()
    )
    text = decls + f"output Z[{', '.join(out_ranks)}]\n{lhs} = {rhs}\n"
    c = parse_cascade(text)
    again = parse_cascade(render_cascade(c))
    assert again == c
    assert render_cascade(again) == render_cascade(c)
