"""Producer/consumer edges between the Einsums of a cascade."""

from __future__ import annotations

from dataclasses import dataclass

from .ir import Affine, Cascade, Einsum, Filtered, Fixed, RankExpr, Role, TensorRef, Var, iterated_vars, tensor_refs


@dataclass(frozen=True)
class Edge:
    producer: int
    consumer: int
    tensor: str
    reduced: frozenset[str]


def _lag(sub: RankExpr, iter_vars: set[str]) -> tuple[str, int] | None:
    """``(v, k)`` when ``sub`` is ``v + k`` for an iterative variable ``v``."""
    if isinstance(sub, Var) and sub.name in iter_vars:
        return sub.name, 0
    if isinstance(sub, Affine) and len(sub.terms) == 1 and sub.terms[0][0] == 1 and sub.terms[0][1] in iter_vars:
        return sub.terms[0][1], sub.offset
    return None


def is_feedback(read: TensorRef, written: TensorRef, iter_vars: set[str]) -> bool:
    """True when ``read`` sees the previous iteration's value of ``written``.

    ``RM[m1,p]`` against a producer writing ``RM[m1+1,p]`` is feedback;
    ``RM[m1+1,p]`` against the same producer is a same-iteration read.
    """
    if len(read.subscripts) != len(written.subscripts):
        return False
    for r, w in zip(read.subscripts, written.subscripts):
        lr, lw = _lag(r, iter_vars), _lag(w, iter_vars)
        if lr and lw and lr[0] == lw[0] and lr[1] < lw[1]:
            return True
    return False


def var_ranks(c: Cascade, e: Einsum) -> dict[str, str]:
    """Map each plain or filtered rank variable of ``e`` to the declared rank it indexes."""
    out: dict[str, str] = {}
    for ref in [e.output] + tensor_refs(e.expr):
        if not c.has_tensor(ref.name):
            continue
        decl = c.tensor(ref.name)
        for rank, sub in zip(decl.ranks, ref.subscripts):
            if isinstance(sub, Var):
                out.setdefault(sub.name, rank)
            elif isinstance(sub, Filtered):
                out.setdefault(sub.var, rank)
    return out


def reduced_ranks(c: Cascade, index: int) -> frozenset[str]:
    """Ranks that Einsum ``index`` reduces away before its output is ready."""
    e = c.einsums[index]
    rvars = set(e.reduction_vars)
    if not rvars:
        return frozenset()
    found: set[str] = set()
    for ref in tensor_refs(e.expr):
        if not c.has_tensor(ref.name):
            continue
        for rank, sub in zip(c.tensor(ref.name).ranks, ref.subscripts):
            if rvars & set(iterated_vars(sub)):
                found.add(rank)
    if c.has_tensor(e.output.name):
        found -= set(c.tensor(e.output.name).ranks)
    return frozenset(found)


def read_sources(c: Cascade, consumer: int, ref: TensorRef) -> tuple[list[int], list[int]]:
    """Producers feeding ``ref`` in Einsum ``consumer``: (edges, feedback-only)."""
    iter_vars = set(c.iter_vars)
    einsums = c.einsums
    direct, feedback = [], []
    for i in c.producers(ref.name):
        if c.is_init(i):
            if i != consumer:
                direct.append(i)
        elif not c.is_init(consumer) and is_feedback(ref, einsums[i].output, iter_vars):
            feedback.append(i)
        else:
            direct.append(i)
    return direct, feedback


def dependency_edges(c: Cascade) -> list[Edge]:
    """One edge per (producer, consumer, tensor); feedback reads add none."""
    seen: dict[tuple[int, int, str], Edge] = {}
    reduced = [reduced_ranks(c, i) for i in range(len(c.einsums))]
    for j, e in enumerate(c.einsums):
        for ref in tensor_refs(e.expr):
            if c.has_tensor(ref.name) and c.tensor(ref.name).role is Role.INPUT:
                continue
            direct, _ = read_sources(c, j, ref)
            for i in direct:
                key = (i, j, ref.name)
                if key not in seen:
                    seen[key] = Edge(i, j, ref.name, reduced[i])
    return sorted(seen.values(), key=lambda ed: (ed.producer, ed.consumer, ed.tensor))


def find_cycle(n: int, edges: list[Edge]) -> list[int] | None:
    """Return one cycle as a node list, or None for a DAG."""
    succ: dict[int, list[int]] = {i: [] for i in range(n)}
    for ed in edges:
        succ[ed.producer].append(ed.consumer)
    state = [0] * n  # 0 new, 1 on stack, 2 done
    stack: list[int] = []

    def visit(u: int) -> list[int] | None:
        state[u] = 1
        stack.append(u)
        for v in sorted(set(succ[u])):
            if state[v] == 1:
                return stack[stack.index(v):] + [v]
            if state[v] == 0:
                found = visit(v)
                if found:
                    return found
        stack.pop()
        state[u] = 2
        return None

    for u in range(n):
        if state[u] == 0:
            found = visit(u)
            if found:
                return found
    return None


def fixed_symbols(sub: RankExpr) -> tuple[str, ...]:
    if isinstance(sub, Fixed) and isinstance(sub.value, str):
        return (sub.value,)
    if isinstance(sub, Affine):
        return tuple(c for c, _ in sub.terms if isinstance(c, str))
    return ()
