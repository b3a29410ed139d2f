"""Pass counting and minimum live footprints.

A *visitor* of ``(T, family)`` is an Einsum that iterates over a rank of the
family while reading ``T``, or while reading a tensor derived from ``T``
(the output of a visitor that keeps a family rank).  Visitors ``u`` and ``w``
are separated by a boundary when some dependency path ``u -> ... -> w``
reduces away the whole family before ``w`` can start: either the family root
itself or, recursively, all of its split children (``M`` or both ``M1`` and
``M0``).  The pass count is one plus the longest chain of boundaries.

Everything here is extent free; only the footprint element counts need
resolved extents.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

from .graph import Edge, dependency_edges, find_cycle, var_ranks
from .ir import Affine, Cascade, CascadeError, ExtentError, Fixed, tensor_refs


class AnalysisError(CascadeError):
    pass


class CycleError(AnalysisError):
    pass


@dataclass(frozen=True)
class DepGraph:
    nodes: tuple[int, ...]
    edges: tuple[Edge, ...]

    def successors(self, node: int) -> list[Edge]:
        return [e for e in self.edges if e.producer == node]


@dataclass(frozen=True)
class PassEntry:
    tensor: str
    rank: str
    passes: int
    boundaries: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class PassReport:
    entries: tuple[PassEntry, ...]

    def get(self, tensor: str, rank: str) -> PassEntry:
        for e in self.entries:
            if e.tensor == tensor and e.rank == rank:
                return e
        raise KeyError((tensor, rank))


@dataclass(frozen=True)
class FootprintEntry:
    tensor: str
    resident_ranks: tuple[str, ...]
    elements: int


@dataclass(frozen=True)
class FootprintReport:
    entries: tuple[FootprintEntry, ...]

    @property
    def aggregate(self) -> int:
        """Total elements if every non-resident rank streams one coordinate at a time."""
        return sum(e.elements for e in self.entries)

    def get(self, tensor: str) -> FootprintEntry:
        for e in self.entries:
            if e.tensor == tensor:
                return e
        raise KeyError(tensor)


def build_dep_graph(c: Cascade) -> DepGraph:
    edges = dependency_edges(c)
    cycle = find_cycle(len(c.einsums), edges)
    if cycle:
        raise CycleError("cyclic dependency between einsums " + " -> ".join(map(str, cycle)))
    return DepGraph(tuple(range(len(c.einsums))), tuple(edges))


# --------------------------------------------------------------------------
# Rank families
# --------------------------------------------------------------------------


def rank_parents(c: Cascade) -> dict[str, str]:
    """Child -> parent links implied by affine subscripts like ``m1*M0+m0``."""
    parents: dict[str, str] = {}
    for e in c.einsums:
        vr = var_ranks(c, e)
        for ref in [e.output] + tensor_refs(e.expr):
            if not c.has_tensor(ref.name):
                continue
            for rank, sub in zip(c.tensor(ref.name).ranks, ref.subscripts):
                if isinstance(sub, Affine):
                    for v in sub.vars:
                        child = vr.get(v)
                        if child is not None and child != rank:
                            parents.setdefault(child, rank)
    return parents


class _Family:
    def __init__(self, parents: Mapping[str, str], rank: str):
        seen = {rank}
        root = rank
        while root in parents and parents[root] not in seen:
            root = parents[root]
            seen.add(root)
        self.root = root
        self.children: dict[str, list[str]] = {}
        for ch, p in parents.items():
            self.children.setdefault(p, []).append(ch)
        members = {root}
        stack = [root]
        while stack:
            r = stack.pop()
            for ch in self.children.get(r, []):
                if ch not in members:
                    members.add(ch)
                    stack.append(ch)
        self.members = frozenset(members)

    def covered(self, reduced: frozenset[str], rank: str | None = None) -> bool:
        rank = rank or self.root
        if rank in reduced:
            return True
        kids = self.children.get(rank, [])
        return bool(kids) and all(self.covered(reduced, k) for k in kids)


# --------------------------------------------------------------------------
# Pass counting
# --------------------------------------------------------------------------


def _visitors(c: Cascade, tensor: str, fam: _Family) -> list[int]:
    sources = {tensor}
    visitors: set[int] = set()
    changed = True
    while changed:
        changed = False
        for i, e in enumerate(c.einsums):
            if i in visitors:
                continue
            for ref in tensor_refs(e.expr):
                if ref.name not in sources:
                    continue
                ranks = c.tensor(ref.name).ranks
                if any(r in fam.members and not isinstance(s, Fixed) for r, s in zip(ranks, ref.subscripts)):
                    visitors.add(i)
                    changed = True
                    out = e.output.name
                    if out not in sources and fam.members & set(c.tensor(out).ranks):
                        sources.add(out)
                    break
    return sorted(visitors)


def _boundaries(graph: DepGraph, visitors: list[int], fam: _Family) -> dict[int, list[int]]:
    succ: dict[int, list[Edge]] = {}
    for ed in graph.edges:
        succ.setdefault(ed.producer, []).append(ed)
    vset = set(visitors)
    out: dict[int, list[int]] = {}
    for u in visitors:
        reached: set[int] = set()
        seen: set[tuple[int, frozenset[str]]] = set()
        stack = [(u, frozenset())]
        while stack:
            node, acc = stack.pop()
            for ed in succ.get(node, []):
                nacc = acc | (ed.reduced & fam.members)
                state = (ed.consumer, nacc)
                if state in seen:
                    continue
                seen.add(state)
                if ed.consumer in vset and fam.covered(nacc):
                    reached.add(ed.consumer)
                stack.append(state)
        out[u] = sorted(reached)
    return out


def count_passes(c: Cascade, tensor: str, rank: str, graph: DepGraph | None = None) -> PassEntry:
    """Passes over the ``rank`` fibers of ``tensor``, with the forcing boundaries."""
    if not c.has_tensor(tensor):
        raise AnalysisError(f"unknown tensor {tensor!r}")
    if rank not in c.tensor(tensor).ranks:
        raise AnalysisError(f"tensor {tensor} has no rank {rank!r}")
    graph = graph or build_dep_graph(c)
    fam = _Family(rank_parents(c), rank)
    visitors = _visitors(c, tensor, fam)
    succ = _boundaries(graph, visitors, fam)

    @lru_cache(maxsize=None)
    def best(v: int) -> tuple[int, ...]:
        options = [(v,) + best(w) for w in succ.get(v, [])]
        if not options:
            return (v,)
        return min(options, key=lambda s: (-len(s), s))

    chains = [best(v) for v in visitors]
    chain = min(chains, key=lambda s: (-len(s), s)) if chains else ()
    pairs = tuple(zip(chain, chain[1:]))
    return PassEntry(tensor, rank, 1 + len(pairs), pairs)


def read_pairs(c: Cascade) -> list[tuple[str, str]]:
    """Every (tensor, rank) read by some Einsum, in declaration order."""
    read = {r.name for e in c.einsums for r in tensor_refs(e.expr)}
    return [(t.name, r) for t in c.tensors if t.name in read for r in t.ranks]


def analyze_passes(c: Cascade) -> PassReport:
    graph = build_dep_graph(c)
    return PassReport(tuple(count_passes(c, t, r, graph) for t, r in read_pairs(c)))


def min_live_footprint(c: Cascade, params: Mapping[str, int] | None = None) -> FootprintReport:
    """Per-tensor resident ranks (those needing more than one pass) and sizes."""
    extents = c.resolve_extents(params, strict=False)
    report = analyze_passes(c)
    by_tensor: dict[str, list[str]] = {}
    for e in report.entries:
        by_tensor.setdefault(e.tensor, [])
        if e.passes > 1:
            by_tensor[e.tensor].append(e.rank)
    entries = []
    for tensor, ranks in by_tensor.items():
        n = 1
        for r in ranks:
            if r not in extents:
                raise ExtentError(f"unresolved extent for rank {r}")
            n *= extents[r]
        entries.append(FootprintEntry(tensor, tuple(ranks), n))
    return FootprintReport(tuple(entries))
