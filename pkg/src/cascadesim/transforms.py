"""Pass-reducing rewrites of a cascade.

``transform_defer_multiply`` factors a reduction so that a fully reduced
operand is applied after the sum instead of inside it.  Two shapes match:

* ``Z = sum[k]( Y * T[..k..] )`` where ``Y`` came from a reduction over the
  rank ``k`` indexes: becomes ``X = sum[k]( T[..k..] )`` then ``Z = Y * X``.
* ``A = N / D`` followed by ``Z = sum[k]( A * W )`` with ``D`` free of ``k``:
  becomes ``NW = sum[k]( N * W )`` then ``Z = NW / D`` (division deferral).

``transform_make_iterative`` turns the two-sweep dot-product pattern into a
single sweep with running values ``RY`` and ``RZ``.
"""

from __future__ import annotations

from dataclasses import replace

from .graph import reduced_ranks
from .ir import (
    Affine,
    Cascade,
    CascadeError,
    ComputeOp,
    Const,
    Einsum,
    Expr,
    Fixed,
    IterRank,
    Map,
    MergeOp,
    RankDecl,
    Reduction,
    Role,
    TensorDecl,
    TensorRef,
    Unary,
    Var,
    iterated_vars,
    tensor_refs,
)


class PatternNotApplicable(CascadeError):
    pass


def _fresh(taken: set[str], base: str) -> str:
    if base not in taken:
        return base
    k = 1
    while f"{base}{k}" in taken:
        k += 1
    return f"{base}{k}"


def _names(c: Cascade) -> set[str]:
    return {t.name for t in c.tensors} | set(c.rank_names)


def _ref_vars(ref: TensorRef) -> set[str]:
    return {v for s in ref.subscripts for v in iterated_vars(s)}


def _readers(c: Cascade, tensor: str) -> list[int]:
    return [i for i, e in enumerate(c.einsums) if any(r.name == tensor for r in tensor_refs(e.expr))]


def _rank_of(c: Cascade, ref: TensorRef, var: str) -> str | None:
    for rank, s in zip(c.tensor(ref.name).ranks, ref.subscripts):
        if var in iterated_vars(s):
            return rank
    return None


def _single_sum(e: Einsum) -> str | None:
    if len(e.reductions) == 1 and e.reductions[0].op is ComputeOp.ADD:
        return e.reductions[0].var
    return None


def _replace_body(c: Cascade, index: int, new: list[Einsum]) -> tuple[Einsum, ...]:
    body = list(c.body)
    k = index - len(c.init)
    body[k:k + 1] = new
    return tuple(body)


def _insert_decl(tensors: tuple[TensorDecl, ...], after: str, decl: TensorDecl) -> tuple[TensorDecl, ...]:
    out = list(tensors)
    pos = next(i for i, t in enumerate(out) if t.name == after)
    out.insert(pos + 1, decl)
    return tuple(out)


# --------------------------------------------------------------------------
# Deferred multiply
# --------------------------------------------------------------------------


def transform_defer_multiply(c: Cascade) -> Cascade:
    """Apply the first matching deferral; raise PatternNotApplicable otherwise."""
    for j, e in enumerate(c.einsums):
        if c.is_init(j):
            continue
        k = _single_sum(e)
        if k is None or not isinstance(e.expr, Map) or e.expr.op is not ComputeOp.MUL:
            continue
        sides = [(e.expr.left, e.expr.right), (e.expr.right, e.expr.left)]
        for y, t in sides:
            if isinstance(y, TensorRef) and isinstance(t, TensorRef):
                out = _defer_scalar(c, j, e, k, y, t)
                if out is not None:
                    return out
        for a, w in sides:
            if isinstance(a, TensorRef):
                out = _defer_division(c, j, e, k, a, w)
                if out is not None:
                    return out
    raise PatternNotApplicable("no Z = sum[k]( Y * T ) with a deferrable factor")


def _defer_scalar(c: Cascade, j: int, e: Einsum, k: str, y: TensorRef, t: TensorRef) -> Cascade | None:
    if k in _ref_vars(y) or k not in _ref_vars(t):
        return None
    producers = c.producers(y.name)
    rank_k = _rank_of(c, t, k)
    if len(producers) != 1 or rank_k is None or rank_k not in reduced_ranks(c, producers[0]):
        return None
    keep = [(r, s) for r, s in zip(c.tensor(t.name).ranks, t.subscripts) if k not in iterated_vars(s)]
    xname = _fresh(_names(c), "X")
    x_ref = TensorRef(xname, tuple(s for _, s in keep))
    x_decl = TensorDecl(xname, tuple(r for r, _ in keep), Role.INTERMEDIATE)
    new_x = Einsum(x_ref, t, (Reduction(k),), None)
    new_z = Einsum(e.output, Map(ComputeOp.MUL, MergeOp.INTERSECT, y, x_ref), (), e.comment)
    return replace(c, tensors=_insert_decl(c.tensors, y.name, x_decl), body=_replace_body(c, j, [new_x, new_z]))


def _defer_division(c: Cascade, j: int, e: Einsum, k: str, a: TensorRef, w: Expr) -> Cascade | None:
    producers = c.producers(a.name)
    if len(producers) != 1 or c.is_init(producers[0]) or c.tensor(a.name).role is not Role.INTERMEDIATE:
        return None
    if _readers(c, a.name) != [j]:
        return None
    i = producers[0]
    pe = c.einsums[i]
    if pe.reductions or not isinstance(pe.expr, Map) or pe.expr.op is not ComputeOp.DIV:
        return None
    num, den = pe.expr.left, pe.expr.right
    # rename the producer's variables to the consumer's through the shared reference
    mapping = {}
    for ps, cs in zip(pe.output.subscripts, a.subscripts):
        if isinstance(ps, Var) and isinstance(cs, Var):
            mapping[ps.name] = cs.name
        elif ps != cs:
            return None
    num, den = _rename(num, mapping), _rename(den, mapping)
    if any(k in _ref_vars(r) for r in tensor_refs(den)):
        return None
    wname = tensor_refs(w)[0].name if tensor_refs(w) else "W"
    nname = num.name if isinstance(num, TensorRef) else "N"
    new_name = _fresh(_names(c) - {a.name}, nname + wname)
    out_decl = c.tensor(e.output.name)
    new_ref = TensorRef(new_name, e.output.subscripts)
    new_decl = TensorDecl(new_name, out_decl.ranks, Role.INTERMEDIATE)
    new_sum = Einsum(new_ref, Map(ComputeOp.MUL, MergeOp.INTERSECT, num, w), e.reductions, pe.comment)
    new_div = Einsum(e.output, Map(ComputeOp.DIV, MergeOp.RIGHT_GATED, new_ref, den), (), e.comment)
    tensors = tuple(new_decl if t.name == a.name else t for t in c.tensors)
    body = list(c.body)
    bi, bj = i - len(c.init), j - len(c.init)
    body[bj] = new_div
    body[bi] = new_sum
    if bj != bi + 1:
        body.insert(bj, body.pop(bi))
    return replace(c, tensors=tensors, body=tuple(body))


def _rename(x: Expr, mapping: dict[str, str]) -> Expr:
    if isinstance(x, TensorRef):
        return TensorRef(x.name, tuple(_rename_sub(s, mapping) for s in x.subscripts))
    if isinstance(x, Map):
        return replace(x, left=_rename(x.left, mapping), right=_rename(x.right, mapping))
    if isinstance(x, Unary):
        return replace(x, operand=_rename(x.operand, mapping))
    return x


def _rename_sub(s, mapping: dict[str, str]):
    if isinstance(s, Var):
        return Var(mapping.get(s.name, s.name))
    if isinstance(s, Affine):
        return Affine(tuple((c, mapping.get(v, v)) for c, v in s.terms), s.offset)
    return s


def _substitute(x: Expr, var: str, new) -> Expr:
    """Replace plain subscript ``var`` by the rank expression ``new``."""
    if isinstance(x, TensorRef):
        return TensorRef(x.name, tuple(new if s == Var(var) else s for s in x.subscripts))
    if isinstance(x, Map):
        return replace(x, left=_substitute(x.left, var, new), right=_substitute(x.right, var, new))
    if isinstance(x, Unary):
        return replace(x, operand=_substitute(x.operand, var, new))
    return x


# --------------------------------------------------------------------------
# Iterative construction
# --------------------------------------------------------------------------


def transform_make_iterative(c: Cascade) -> Cascade:
    """Rewrite ``Y = sum[k](f(k)); Z = sum[k](Y * T[k])`` as one sweep over k.

    The result carries ``RY[i+1] = RY[i] + f(i)`` and
    ``RZ[i+1] = RZ[i] * (RY[i+1] / RY[i]) + RY[i+1] * T[i]``, both starting at
    zero, followed by ``Z = RZ[K]``.  Only scalar ``Y`` and ``Z`` are handled.
    """
    if c.iterative or c.init:
        raise PatternNotApplicable("cascade already has iterative ranks or initialization")
    einsums = c.einsums
    for j, z in enumerate(einsums):
        k = _single_sum(z)
        if k is None or z.output.subscripts or not isinstance(z.expr, Map) or z.expr.op is not ComputeOp.MUL:
            continue
        for y, t in ((z.expr.left, z.expr.right), (z.expr.right, z.expr.left)):
            if not (isinstance(y, TensorRef) and isinstance(t, TensorRef)) or y.subscripts:
                continue
            if t.subscripts != (Var(k),):
                continue
            prods = c.producers(y.name)
            if len(prods) != 1 or prods[0] >= j:
                continue
            ye = einsums[prods[0]]
            ky = _single_sum(ye)
            if ky is None or ye.output.subscripts or c.tensor(y.name).role is not Role.INTERMEDIATE:
                continue
            rank_k = c.tensor(t.name).ranks[0]
            if _rank_of(c, tensor_refs(ye.expr)[0], ky) != rank_k:
                continue
            if any(r != j for r in _readers(c, y.name)):
                continue
            return _build_iterative(c, prods[0], j, ye, z, ky, k, t, rank_k)
    raise PatternNotApplicable("no Y = sum[k](...), Z = sum[k]( Y * T[k] ) pair over the same rank")


def _build_iterative(c, yi, zj, ye, z, ky, kz, t, rank_k) -> Cascade:
    taken = _names(c)
    ivar = "i"
    used_vars = {v for e in c.einsums for r in [e.output] + tensor_refs(e.expr) for v in _ref_vars(r)}
    while ivar in used_vars:
        ivar += "_"
    irank = _fresh(taken, "I")
    ry = _fresh(taken | {irank}, "R" + ye.output.name)
    rz = _fresh(taken | {irank, ry}, "R" + z.output.name)
    i0, i1 = Var(ivar), Affine(((1, ivar),), 1)

    def ref(name, s):
        return TensorRef(name, (s,))

    init = (
        Einsum(ref(ry, Fixed(0)), Const(0.0)),
        Einsum(ref(rz, Fixed(0)), Const(0.0)),
    )
    step_y = Einsum(
        ref(ry, i1),
        Map(ComputeOp.ADD, MergeOp.UNION, ref(ry, i0), _substitute(ye.expr, ky, i0)),
    )
    ratio = Map(ComputeOp.DIV, MergeOp.RIGHT_GATED, ref(ry, i1), ref(ry, i0))
    step_z = Einsum(
        ref(rz, i1),
        Map(
            ComputeOp.ADD,
            MergeOp.UNION,
            Map(ComputeOp.MUL, MergeOp.INTERSECT, ref(rz, i0), ratio),
            Map(ComputeOp.MUL, MergeOp.INTERSECT, ref(ry, i1), _substitute(t, kz, i0)),
        ),
    )
    final = Einsum(z.output, ref(rz, Fixed(rank_k)), (), z.comment)

    body = list(c.body)
    body[zj] = final
    body[yi] = None
    body = [b for b in body if b is not None]
    pos = body.index(final)
    body[pos:pos] = [step_y, step_z]

    tensors = []
    for d in c.tensors:
        if d.name == ye.output.name:
            tensors.append(TensorDecl(ry, (irank,), Role.INTERMEDIATE))
            tensors.append(TensorDecl(rz, (irank,), Role.INTERMEDIATE))
        else:
            tensors.append(d)
    ranks = c.ranks + (RankDecl(irank, rank_k),)
    return replace(
        c,
        ranks=ranks,
        tensors=tuple(tensors),
        init=init,
        body=tuple(body),
        iterative=(IterRank(ivar, rank_k),),
    )
