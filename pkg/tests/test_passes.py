import dataclasses

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cascadesim import (
    CascadeError,
    CycleError,
    ExtentError,
    analyze_passes,
    build_dep_graph,
    count_passes,
    min_live_footprint,
    parse_cascade,
    transform_defer_multiply,
    transform_make_iterative,
)
from cascadesim.ir import RankDecl
from conftest import CORPUS


def test_cascade1_edge_reduces_k(cascade):
    g = build_dep_graph(cascade("cascade1.cas"))
    assert [(e.producer, e.consumer, e.tensor, set(e.reduced)) for e in g.edges] == [(0, 1, "Y", {"K"})]


def test_single_einsum_graph():
    g = build_dep_graph(parse_cascade("rank K\ninput A[K]\noutput Z[]\nZ = sum[k]( A[k] )\n"))
    assert g.nodes == (0,) and g.edges == ()


def test_three_pass_edges(cascade):
    c = cascade("attn_3pass.cas")
    prod = {e.output.name: i for i, e in enumerate(c.einsums)}
    edges = {(e.producer, e.consumer, e.tensor): set(e.reduced) for e in build_dep_graph(c).edges}
    assert edges[(prod["GM"], prod["SN"], "GM")] == {"M"}
    assert edges[(prod["SD"], prod["A"], "SD")] == {"M"}


@pytest.mark.parametrize(
    "name, tensor, rank, passes",
    [
        ("cascade1.cas", "A", "K", 2),
        ("cascade2.cas", "A", "K", 1),
        ("cascade3_iterative.cas", "A", "K", 1),
        ("attn_3pass.cas", "QK", "M", 3),
        ("attn_3pass.cas", "K", "M", 3),
        ("attn_2pass.cas", "K", "M", 2),
        ("attn_2pass.cas", "BQK", "M0", 2),
        ("attn_1pass.cas", "BQK", "M0", 1),
        ("attn_1pass.cas", "K", "M", 1),
    ],
)
def test_pass_counts(cascade, name, tensor, rank, passes):
    assert count_passes(cascade(name), tensor, rank).passes == passes


def test_cascade1_boundary_is_the_einsum_pair(cascade):
    assert count_passes(cascade("cascade1.cas"), "A", "K").boundaries == ((0, 1),)


def test_three_pass_chain_runs_through_sn(cascade):
    c = cascade("attn_3pass.cas")
    names = [c.einsums[i].output.name for pair in count_passes(c, "QK", "M").boundaries for i in pair]
    assert names == ["GM", "SN", "SN", "A"]


def test_one_pass_attention_has_no_extra_passes(cascade):
    assert {e.passes for e in analyze_passes(cascade("attn_1pass.cas")).entries} == {1}


@pytest.mark.parametrize("name", CORPUS)
def test_passes_equal_one_plus_boundaries(cascade, name):
    for e in analyze_passes(cascade(name)).entries:
        assert e.passes >= 1
        assert e.passes == 1 + len(e.boundaries)


def test_unknown_tensor_or_rank(cascade):
    c = cascade("cascade1.cas")
    with pytest.raises(CascadeError):
        count_passes(c, "Nope", "K")
    with pytest.raises(CascadeError):
        count_passes(c, "A", "Nope")


def test_cycle_error():
    text = "rank K\ninput A[K]\ntensor X[K]\ntensor Y[K]\noutput Z[]\nX[k] = Y[k] + A[k]\nY[k] = X[k] * A[k]\nZ = sum[k]( Y[k] )\n"
    with pytest.raises(CycleError):
        build_dep_graph(parse_cascade(text, check=False))


# -- footprint ---------------------------------------------------------------

def test_footprint_cascade1(cascade):
    a = min_live_footprint(cascade("cascade1.cas"), {"K": 1024}).get("A")
    assert (a.resident_ranks, a.elements) == (("K",), 1024)


def test_footprint_cascade2_streams(cascade):
    a = min_live_footprint(cascade("cascade2.cas"), {"K": 1024}).get("A")
    assert (a.resident_ranks, a.elements) == ((), 1)


def test_footprint_three_pass(cascade):
    qk = min_live_footprint(cascade("attn_3pass.cas"), {"M": 64, "P": 64, "E": 8, "F": 8}).get("QK")
    assert (qk.resident_ranks, qk.elements) == (("M",), 64)


def test_footprint_needs_extents(cascade):
    with pytest.raises(ExtentError):
        min_live_footprint(cascade("cascade1.cas"), {})


@given(st.integers(1, 4096))
def test_footprint_is_product_of_resident_extents(k):
    from conftest import CASCADES
    from cascadesim import load_cascade

    fp = min_live_footprint(load_cascade(CASCADES / "cascade1.cas"), {"K": k})
    assert fp.get("A").elements == k
    assert fp.aggregate == sum(e.elements for e in fp.entries)


# -- invariants --------------------------------------------------------------

@given(st.data())
def test_pass_counts_ignore_extents(data):
    from conftest import CASCADES
    from cascadesim import load_cascade

    name = data.draw(st.sampled_from(CORPUS))
    c = load_cascade(CASCADES / name)
    ranks = tuple(RankDecl(r.name, data.draw(st.integers(1, 10_000))) for r in c.ranks)
    assert analyze_passes(dataclasses.replace(c, ranks=ranks)) == analyze_passes(c)


@pytest.mark.parametrize(
    "name, transform, tensor, rank",
    [
        ("cascade1.cas", transform_defer_multiply, "A", "K"),
        ("cascade1.cas", transform_make_iterative, "A", "K"),
        ("attn_3pass.cas", transform_defer_multiply, "QK", "M"),
    ],
)
def test_transforms_never_add_passes(cascade, name, transform, tensor, rank):
    before = cascade(name)
    after = transform(before)
    old = {(e.tensor, e.rank): e.passes for e in analyze_passes(before).entries}
    new = {(e.tensor, e.rank): e.passes for e in analyze_passes(after).entries}
    for key, n in new.items():
        if key in old:
            assert n <= old[key]
    assert new[(tensor, rank)] < old[(tensor, rank)]


@st.composite
def reader_chains(draw):
    """Einsum j reads A[k] and optionally the scalar of an earlier Einsum."""
    n = draw(st.integers(1, 6))
    deps = [None] + [draw(st.one_of(st.none(), st.integers(0, j - 1))) for j in range(1, n)]
    return deps


@given(reader_chains())
def test_pass_count_matches_dependency_depth(deps):
    lines = ["rank K", "input A[K]"]
    lines += [f"tensor Y{j}[]" for j in range(len(deps) - 1)] + [f"output Y{len(deps) - 1}[]"]
    for j, d in enumerate(deps):
        rhs = f"Y{d} * A[k]" if d is not None else "A[k]"
        lines.append(f"Y{j} = sum[k]( {rhs} )")
    c = parse_cascade("\n".join(lines) + "\n")
    depth = []
    for d in deps:
        depth.append(1 if d is None else depth[d] + 1)
    assert count_passes(c, "A", "K").passes == max(depth)
