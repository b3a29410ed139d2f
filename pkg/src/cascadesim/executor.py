"""Dense numeric interpreter for cascades.

Each Einsum is evaluated over a broadcast grid of its rank variables.
Initialization Einsums run once with iterative variables treated as ordinary
ones.  In the body, maximal runs of Einsums that mention an iterative variable
are looped over ``v < stop``; the remaining Einsums run once, in order.

Dense semantics for the merge operators: every coordinate is present, so
union and intersection coincide.  The right-gated divide skips zero divisors
and yields 0 there; that is what makes the first step of the iterative
dot-product cascade (``RY[0] = 0``) well defined.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .counters import OpCounters
from .graph import var_ranks
from .ir import (
    Affine,
    Cascade,
    CascadeError,
    ComputeOp,
    Const,
    Einsum,
    Expr,
    Filtered,
    Fixed,
    Map,
    RankExpr,
    Role,
    TensorRef,
    Unary,
    Var,
    iterated_vars,
    tensor_refs,
)


class ExecutionError(CascadeError):
    pass


_CMP = {"<=": operator.le, "<": operator.lt, ">=": operator.ge, ">": operator.gt}


@dataclass
class ExecResult:
    tensors: dict[str, np.ndarray]
    counters: OpCounters = field(default_factory=OpCounters)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]


def storage_shape(c: Cascade, tensor: str, extents: Mapping[str, int]) -> tuple[int, ...]:
    """Declared extents, grown where an Einsum writes ``v+k`` past the end."""
    decl = c.tensor(tensor)
    shape = [extents[r] for r in decl.ranks]
    for e in c.einsums:
        if e.output.name != tensor:
            continue
        for d, sub in enumerate(e.output.subscripts):
            if isinstance(sub, Affine) and sub.offset > 0:
                shape[d] = max(shape[d], extents[decl.ranks[d]] + sub.offset)
    return tuple(shape)


class _Grid:
    def __init__(self, names: list[str], sizes: list[int], bound: Mapping[str, int]):
        self.names = names
        self.sizes = sizes
        self.bound = dict(bound)
        n = len(names)
        self.axes = {}
        for j, (v, s) in enumerate(zip(names, sizes)):
            shape = [1] * n
            shape[j] = s
            self.axes[v] = np.arange(s).reshape(shape)
        self.shape = tuple(sizes)

    def var(self, v: str):
        if v in self.bound:
            return self.bound[v]
        return self.axes[v]


class Executor:
    """Run a cascade on concrete inputs.

    ``store_dtype`` rounds every stored tensor (inputs included) to that type
    after it is written; arithmetic and reductions always run in double.
    """

    def __init__(
        self,
        cascade: Cascade,
        params: Mapping[str, int] | None = None,
        store_dtype=np.float64,
        user_ops: Mapping[str, Callable] | None = None,
    ):
        self.c = cascade
        self.extents = cascade.resolve_extents(params)
        self.store_dtype = np.dtype(store_dtype)
        self.user_ops = dict(user_ops or {})
        self.counters = OpCounters()
        self.stores: dict[str, np.ndarray] = {}

    # -- public -------------------------------------------------------------
    def run(self, inputs: Mapping[str, np.ndarray]) -> ExecResult:
        c = self.c
        self.counters = OpCounters()
        self.stores = {}
        for t in c.tensors:
            shape = storage_shape(c, t.name, self.extents)
            if t.role is Role.INPUT:
                if t.name not in inputs:
                    raise ExecutionError(f"missing input {t.name}")
                arr = np.asarray(inputs[t.name], dtype=np.float64)
                if arr.shape != shape:
                    raise ExecutionError(f"input {t.name} has shape {arr.shape}, expected {shape}")
                self.stores[t.name] = self._round(arr.copy())
            else:
                self.stores[t.name] = np.zeros(shape)
        for e in c.init:
            self._eval(e, {})
        iter_vars = set(c.iter_vars)
        body = list(c.body)
        k = 0
        while k < len(body):
            if not self._mentions(body[k], iter_vars):
                self._eval(body[k], {})
                k += 1
                continue
            seg = [body[k]]
            k += 1
            while k < len(body) and self._mentions(body[k], iter_vars):
                seg.append(body[k])
                k += 1
            self._loop(seg, list(c.iterative), {})
        return ExecResult(dict(self.stores), self.counters)

    # -- iteration --------------------------------------------------------
    @staticmethod
    def _mentions(e: Einsum, iter_vars: set[str]) -> set[str]:
        used = set()
        for ref in [e.output] + tensor_refs(e.expr):
            for s in ref.subscripts:
                used |= set(iterated_vars(s))
                if isinstance(s, Filtered):
                    used |= set(iterated_vars(s.bound))
        return used & iter_vars

    def _loop(self, seg: list[Einsum], iters, bound: dict[str, int]):
        if not iters:
            for e in seg:
                self._eval(e, bound)
            return
        it, rest = iters[0], iters[1:]
        stop = it.stop if isinstance(it.stop, int) else self.extents[it.stop]
        uses = [e for e in seg if it.var in self._mentions(e, {it.var})]
        if not uses:
            self._loop(seg, rest, bound)
            return
        for v in range(stop):
            self._loop(seg, rest, {**bound, it.var: v})

    # -- evaluation -------------------------------------------------------
    def _round(self, arr: np.ndarray) -> np.ndarray:
        if self.store_dtype == np.float64:
            return arr
        return arr.astype(self.store_dtype).astype(np.float64)

    def _eval(self, e: Einsum, bound: Mapping[str, int]):
        c = self.c
        vr = var_ranks(c, e)
        out_vars: list[str] = []
        for s in e.output.subscripts:
            for v in iterated_vars(s):
                if v not in bound and v not in out_vars:
                    out_vars.append(v)
        red_vars = [v for v in e.reduction_vars if v not in out_vars]
        others: list[str] = []
        for ref in tensor_refs(e.expr):
            for s in ref.subscripts:
                for v in iterated_vars(s):
                    if v not in bound and v not in out_vars and v not in red_vars and v not in others:
                        others.append(v)
        if others:
            raise ExecutionError(f"unreduced variables {others} in {e.output.name}")
        names = out_vars + red_vars
        sizes = []
        for v in names:
            if v not in vr:
                raise ExecutionError(f"cannot infer the extent of variable {v}")
            sizes.append(self.extents[vr[v]])
        grid = _Grid(names, sizes, bound)

        mask = np.ones(grid.shape, dtype=bool)
        for ref in tensor_refs(e.expr):
            for s in ref.subscripts:
                if isinstance(s, Filtered):
                    mask = mask & _CMP[s.op](grid.var(s.var), self._index(s.bound, grid))
        active = int(mask.sum())

        value = np.broadcast_to(self._expr(e.expr, grid, mask, active), grid.shape)

        n_out = len(out_vars)
        # consecutive reductions with the same operator form one joint reduction
        groups: list[tuple[ComputeOp, list[str]]] = []
        for red in reversed(e.reductions):
            if red.var not in names:
                continue
            if groups and groups[-1][0] is red.op:
                groups[-1][1].append(red.var)
            else:
                groups.append((red.op, [red.var]))
        for op, rvars in groups:
            axes = tuple(names.index(v) for v in rvars)
            if op is ComputeOp.ADD:
                value = np.where(mask, value, 0.0).sum(axis=axes)
                self.counters.add += active
            elif op is ComputeOp.MAX:
                value = np.where(mask, value, -np.inf).max(axis=axes)
                self.counters.max += active
            else:
                raise ExecutionError(f"unsupported reduction {op.value}")
            mask = mask.any(axis=axes)
            active = int(mask.sum())
            names = [v for v in names if v not in rvars]
        assert len(names) == n_out

        out_grid = _Grid(out_vars, sizes[:n_out], bound)
        store = self.stores[e.output.name]
        idx = tuple(np.broadcast_to(self._index(s, out_grid), out_grid.shape) for s in e.output.subscripts)
        self._check_range(e.output.name, idx, store.shape)
        store[idx] = self._round(np.broadcast_to(value, out_grid.shape))

    def _index(self, s: RankExpr, grid: _Grid):
        if isinstance(s, Var):
            return grid.var(s.name)
        if isinstance(s, Fixed):
            return s.value if isinstance(s.value, int) else self.extents[s.value]
        if isinstance(s, Filtered):
            return grid.var(s.var)
        total = s.offset
        for coef, v in s.terms:
            k = coef if isinstance(coef, int) else self.extents[coef]
            total = total + k * grid.var(v)
        return total

    @staticmethod
    def _check_range(name: str, idx, shape):
        for d, (ix, n) in enumerate(zip(idx, shape)):
            arr = np.asarray(ix)
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                raise ExecutionError(f"index out of range on {name} dimension {d} (extent {n})")

    def _expr(self, x: Expr, grid: _Grid, mask: np.ndarray, active: int):
        if isinstance(x, Const):
            return np.float64(x.value)
        if isinstance(x, TensorRef):
            store = self.stores[x.name]
            if not x.subscripts:
                return store[()]
            idx = tuple(self._index(s, grid) for s in x.subscripts)
            full = [np.broadcast_to(i, grid.shape) for i in idx]
            self._check_range(x.name, full, store.shape)
            return store[tuple(idx)]
        if isinstance(x, Unary):
            a = self._expr(x.operand, grid, mask, active)
            if x.op is ComputeOp.NEG:
                return -a
            if x.op is ComputeOp.EXP:
                self.counters.exp += active
                return np.exp(a)
            return self._user(x.tag)(a)
        a = self._expr(x.left, grid, mask, active)
        b = self._expr(x.right, grid, mask, active)
        op = x.op
        if op is ComputeOp.ADD:
            self.counters.add += active
            return a + b
        if op is ComputeOp.MUL:
            self.counters.mul += active
            return a * b
        if op is ComputeOp.MAX:
            self.counters.max += active
            return np.maximum(a, b)
        if op is ComputeOp.SUB_EXP:
            self.counters.add += active
            self.counters.exp += active
            with np.errstate(invalid="ignore"):
                return np.exp(a - b)
        if op is ComputeOp.DIV:
            a, b = np.broadcast_arrays(a, b)
            nz = b != 0
            self.counters.div += int((np.broadcast_to(nz, mask.shape) & mask).sum())
            out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
            np.divide(a, b, out=out, where=nz)
            return out
        return self._user(x.tag)(a, b)

    def _user(self, tag: str | None) -> Callable:
        if tag not in self.user_ops:
            raise ExecutionError(f"no implementation supplied for user operator {tag!r}")
        return self.user_ops[tag]


def run_cascade(
    c: Cascade,
    inputs: Mapping[str, np.ndarray],
    params: Mapping[str, int] | None = None,
    store_dtype=np.float64,
    user_ops: Mapping[str, Callable] | None = None,
) -> ExecResult:
    return Executor(c, params, store_dtype, user_ops).run(inputs)
