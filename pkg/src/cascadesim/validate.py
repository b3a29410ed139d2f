"""Static checks on a :class:`~cascadesim.ir.Cascade`.

Each problem becomes a :class:`Diagnostic` carrying the global Einsum index
(``None`` for declaration-level problems) and a stable rule id:

``duplicate-decl``, ``unknown-rank``, ``unknown-tensor``, ``arity``,
``input-written``, ``filter-in-output``, ``unbound-var``,
``reduction-in-output``, ``reduction-unused``, ``reduction-op``,
``merge-pairing``, ``op-arity``, ``filter-unbound``,
``undefined-intermediate``, ``missing-init``, ``use-before-def``,
``cyclic-dependency``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph import dependency_edges, find_cycle, fixed_symbols, read_sources
from .ir import (
    BINARY_OPS,
    REQUIRED_MERGE,
    UNARY_OPS,
    Cascade,
    ComputeOp,
    Einsum,
    Filtered,
    Map,
    Role,
    Unary,
    expr_vars,
    iterated_vars,
    tensor_refs,
    walk,
)


@dataclass(frozen=True)
class Diagnostic:
    index: int | None
    rule: str
    message: str

    def __str__(self) -> str:
        where = "declarations" if self.index is None else f"einsum {self.index}"
        return f"{where}: [{self.rule}] {self.message}"


def validate(c: Cascade) -> list[Diagnostic]:
    """Return every invariant violation in ``c`` (empty when valid)."""
    out: list[Diagnostic] = []
    out += _check_decls(c)
    for i, e in enumerate(c.einsums):
        out += _check_einsum(c, i, e)
    if not any(d.rule in ("unknown-tensor", "arity") for d in out):
        out += _check_dependencies(c)
    return out


def _check_decls(c: Cascade) -> list[Diagnostic]:
    out = []
    ranks = set()
    for r in c.ranks:
        if r.name in ranks:
            out.append(Diagnostic(None, "duplicate-decl", f"rank {r.name} declared twice"))
        ranks.add(r.name)
    names = set()
    for t in c.tensors:
        if t.name in names:
            out.append(Diagnostic(None, "duplicate-decl", f"tensor {t.name} declared twice"))
        names.add(t.name)
        for r in t.ranks:
            if r not in ranks:
                out.append(Diagnostic(None, "unknown-rank", f"tensor {t.name} uses undeclared rank {r}"))
    seen_iter = set()
    for it in c.iterative:
        if it.var in seen_iter:
            out.append(Diagnostic(None, "duplicate-decl", f"iterative rank {it.var} declared twice"))
        seen_iter.add(it.var)
        if isinstance(it.stop, str) and it.stop not in ranks:
            out.append(Diagnostic(None, "unknown-rank", f"stop condition for {it.var} uses undeclared rank {it.stop}"))
    return out


def _check_einsum(c: Cascade, i: int, e: Einsum) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    ranks = set(c.rank_names)
    in_body = not c.is_init(i)
    iter_vars = set(c.iter_vars) if in_body else set()
    refs = tensor_refs(e.expr)

    for ref in [e.output] + refs:
        if not c.has_tensor(ref.name):
            out.append(Diagnostic(i, "unknown-tensor", f"{ref.name} is not declared"))
            continue
        decl = c.tensor(ref.name)
        if len(decl.ranks) != len(ref.subscripts):
            out.append(
                Diagnostic(i, "arity", f"{ref.name} has {len(decl.ranks)} ranks but is subscripted with {len(ref.subscripts)}")
            )
        for sub in ref.subscripts:
            syms = fixed_symbols(sub)
            if isinstance(sub, Filtered):
                syms += fixed_symbols(sub.bound)
            for s in syms:
                if s not in ranks:
                    out.append(Diagnostic(i, "unknown-rank", f"{ref.name} uses undeclared rank {s}"))

    if c.has_tensor(e.output.name) and c.tensor(e.output.name).role is Role.INPUT:
        out.append(Diagnostic(i, "input-written", f"input tensor {e.output.name} is written"))
    if any(isinstance(s, Filtered) for s in e.output.subscripts):
        out.append(Diagnostic(i, "filter-in-output", f"output {e.output.name} uses a filtered subscript"))

    out_vars = {v for s in e.output.subscripts for v in iterated_vars(s)}
    in_vars = {v for r in refs for s in r.subscripts for v in iterated_vars(s)}
    if refs:
        for v in sorted(out_vars - in_vars - iter_vars):
            out.append(Diagnostic(i, "unbound-var", f"output variable {v} is not bound by any input"))

    rvars = []
    for red in e.reductions:
        if red.var in rvars:
            out.append(Diagnostic(i, "reduction-in-output", f"reduction over {red.var} listed twice"))
        rvars.append(red.var)
        if red.var in out_vars:
            out.append(Diagnostic(i, "reduction-in-output", f"reduction rank {red.var} appears in the output"))
        if red.var not in in_vars:
            out.append(Diagnostic(i, "reduction-unused", f"reduction rank {red.var} does not appear in the expression"))
        if red.var in iter_vars:
            out.append(Diagnostic(i, "reduction-in-output", f"iterative rank {red.var} cannot be reduced"))
        if red.op not in (ComputeOp.ADD, ComputeOp.MAX):
            out.append(Diagnostic(i, "reduction-op", f"unsupported reduction operator {red.op.value}"))

    for node in walk(e.expr):
        if isinstance(node, Map):
            if node.op not in BINARY_OPS and node.op is not ComputeOp.USER:
                out.append(Diagnostic(i, "op-arity", f"{node.op.value} is not a binary operator"))
            need = REQUIRED_MERGE.get(node.op)
            if need is not None and node.merge is not need:
                out.append(
                    Diagnostic(i, "merge-pairing", f"{node.op.value} must use {need.value} merge, not {node.merge.value}")
                )
        elif isinstance(node, Unary):
            if node.op not in UNARY_OPS and node.op is not ComputeOp.USER:
                out.append(Diagnostic(i, "op-arity", f"{node.op.value} is not a unary operator"))

    bound_here = out_vars | in_vars | set(rvars) | set(c.iter_vars)
    for ref in refs:
        for sub in ref.subscripts:
            if isinstance(sub, Filtered):
                for v in expr_vars(sub.bound):
                    if v not in bound_here or v == sub.var:
                        out.append(Diagnostic(i, "filter-unbound", f"filter on {sub.var} references unbound variable {v}"))
    return out


def _check_dependencies(c: Cascade) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    einsums = c.einsums
    for j, e in enumerate(einsums):
        for ref in tensor_refs(e.expr):
            decl = c.tensor(ref.name)
            if decl.role is Role.INPUT:
                continue
            producers = c.producers(ref.name)
            if not producers:
                out.append(Diagnostic(j, "undefined-intermediate", f"{ref.name} is read but never produced"))
                continue
            direct, feedback = read_sources(c, j, ref)
            if feedback and not any(c.is_init(i) for i in producers):
                out.append(
                    Diagnostic(j, "missing-init", f"{ref.name} is read from a previous iteration but never initialized")
                )
    edges = dependency_edges(c)
    cycle = find_cycle(len(einsums), edges)
    if cycle:
        path = " -> ".join(str(k) for k in cycle)
        out.append(Diagnostic(cycle[0], "cyclic-dependency", f"cyclic dependency between einsums {path}"))
        return out
    for ed in edges:
        if ed.producer > ed.consumer:
            out.append(
                Diagnostic(ed.consumer, "use-before-def", f"{ed.tensor} is read before einsum {ed.producer} produces it")
            )
    return out
