"""In-memory representation of extended-Einsum cascades.

All IR values are frozen dataclasses: they hash, compare structurally and can
be shared freely between threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Mapping, Union


class CascadeError(Exception):
    """Base class for IR, parse and analysis failures."""


class ExtentError(CascadeError):
    """A symbolic extent could not be resolved to a positive integer."""


# --------------------------------------------------------------------------
# Rank expressions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Affine:
    """``sum(coef * var) + offset``; a coefficient is an int or a rank symbol."""

    terms: tuple[tuple[Union[int, str], str], ...]
    offset: int = 0

    @property
    def vars(self) -> tuple[str, ...]:
        return tuple(v for _, v in self.terms)


@dataclass(frozen=True)
class Filtered:
    """``var : var <op> bound``, e.g. ``k:k<=i``."""

    var: str
    op: str
    bound: Union[Var, Affine]


@dataclass(frozen=True)
class Fixed:
    """A single coordinate: an integer literal or a rank symbol (its extent)."""

    value: Union[int, str]


RankExpr = Union[Var, Affine, Filtered, Fixed]

FILTER_OPS = ("<=", "<", ">=", ">")


def expr_vars(sub: RankExpr) -> tuple[str, ...]:
    """Rank variables mentioned by a subscript (filter bounds included)."""
    if isinstance(sub, Var):
        return (sub.name,)
    if isinstance(sub, Affine):
        return sub.vars
    if isinstance(sub, Filtered):
        return (sub.var,) + expr_vars(sub.bound)
    return ()


def iterated_vars(sub: RankExpr) -> tuple[str, ...]:
    """Variables that sweep this subscript position (filter bounds excluded)."""
    if isinstance(sub, Var):
        return (sub.name,)
    if isinstance(sub, Affine):
        return sub.vars
    if isinstance(sub, Filtered):
        return (sub.var,)
    return ()


# --------------------------------------------------------------------------
# Operators and expressions
# --------------------------------------------------------------------------


class ComputeOp(Enum):
    ADD = "add"
    MUL = "multiply"
    MAX = "max"
    DIV = "divide"
    SUB_EXP = "sub-then-exp"
    EXP = "exp"
    NEG = "negate"
    USER = "user"


class MergeOp(Enum):
    INTERSECT = "intersect"
    UNION = "union"
    PASS_THROUGH = "pass-through"
    RIGHT_GATED = "right-gated"


BINARY_OPS = {ComputeOp.ADD, ComputeOp.MUL, ComputeOp.MAX, ComputeOp.DIV, ComputeOp.SUB_EXP}
UNARY_OPS = {ComputeOp.EXP, ComputeOp.NEG}

# merge operator implied by each compute operator
DEFAULT_MERGE = {
    ComputeOp.ADD: MergeOp.UNION,
    ComputeOp.MUL: MergeOp.INTERSECT,
    ComputeOp.MAX: MergeOp.UNION,
    ComputeOp.DIV: MergeOp.RIGHT_GATED,
    ComputeOp.SUB_EXP: MergeOp.PASS_THROUGH,
    ComputeOp.USER: MergeOp.PASS_THROUGH,
}

# pairings that validation insists on
REQUIRED_MERGE = {
    ComputeOp.DIV: MergeOp.RIGHT_GATED,
    ComputeOp.MAX: MergeOp.UNION,
    ComputeOp.SUB_EXP: MergeOp.PASS_THROUGH,
}


@dataclass(frozen=True)
class TensorRef:
    name: str
    subscripts: tuple[RankExpr, ...] = ()


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Map:
    op: ComputeOp
    merge: MergeOp
    left: "Expr"
    right: "Expr"
    tag: str | None = None


@dataclass(frozen=True)
class Unary:
    op: ComputeOp
    operand: "Expr"
    tag: str | None = None


Expr = Union[TensorRef, Const, Map, Unary]


@dataclass(frozen=True)
class Reduction:
    var: str
    op: ComputeOp = ComputeOp.ADD
    merge: MergeOp = MergeOp.UNION


@dataclass(frozen=True)
class Einsum:
    output: TensorRef
    expr: Expr
    reductions: tuple[Reduction, ...] = ()
    comment: str | None = None

    @property
    def reduction_vars(self) -> tuple[str, ...]:
        return tuple(r.var for r in self.reductions)


def walk(expr: Expr) -> Iterator[Expr]:
    """Pre-order traversal of an expression tree."""
    yield expr
    if isinstance(expr, Map):
        yield from walk(expr.left)
        yield from walk(expr.right)
    elif isinstance(expr, Unary):
        yield from walk(expr.operand)


def tensor_refs(expr: Expr) -> list[TensorRef]:
    return [e for e in walk(expr) if isinstance(e, TensorRef)]


# --------------------------------------------------------------------------
# Declarations and cascades
# --------------------------------------------------------------------------


class Role(Enum):
    INPUT = "input"
    INTERMEDIATE = "tensor"
    OUTPUT = "output"


@dataclass(frozen=True)
class RankDecl:
    name: str
    extent: Union[int, str, None] = None  # int, symbolic expression, or unset


@dataclass(frozen=True)
class TensorDecl:
    name: str
    ranks: tuple[str, ...]
    role: Role = Role.INTERMEDIATE


@dataclass(frozen=True)
class IterRank:
    """Iterative rank variable ``var`` with stop condition ``var >= stop``."""

    var: str
    stop: Union[int, str]


@dataclass(frozen=True)
class Cascade:
    ranks: tuple[RankDecl, ...] = ()
    tensors: tuple[TensorDecl, ...] = ()
    init: tuple[Einsum, ...] = ()
    body: tuple[Einsum, ...] = ()
    iterative: tuple[IterRank, ...] = ()
    name: str | None = field(default=None, compare=False)

    @property
    def einsums(self) -> tuple[Einsum, ...]:
        """Initialization Einsums followed by body Einsums (global indexing)."""
        return self.init + self.body

    def is_init(self, index: int) -> bool:
        return index < len(self.init)

    def tensor(self, name: str) -> TensorDecl:
        for t in self.tensors:
            if t.name == name:
                return t
        raise CascadeError(f"unknown tensor {name!r}")

    def has_tensor(self, name: str) -> bool:
        return any(t.name == name for t in self.tensors)

    @property
    def rank_names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.ranks)

    @property
    def iter_vars(self) -> tuple[str, ...]:
        return tuple(it.var for it in self.iterative)

    def producers(self, tensor: str) -> list[int]:
        return [i for i, e in enumerate(self.einsums) if e.output.name == tensor]

    def resolve_extents(self, params: Mapping[str, int] | None = None, strict: bool = True) -> dict[str, int]:
        """Resolve every rank extent from declarations plus ``params``.

        ``params`` override declared extents.  With ``strict`` an unresolvable
        extent raises :class:`ExtentError`; otherwise it is left out.
        """
        params = dict(params or {})
        decls = {r.name: r.extent for r in self.ranks}
        out: dict[str, int] = {}

        def value(name: str, stack: tuple[str, ...]) -> int | None:
            if name in out:
                return out[name]
            if name in params:
                v = int(params[name])
            elif name not in decls:
                return None
            else:
                ext = decls[name]
                if ext is None:
                    return None
                if isinstance(ext, int):
                    v = ext
                else:
                    if name in stack:
                        raise ExtentError(f"circular extent definition for {name}")
                    v = _eval_extent(ext, lambda n: value(n, stack + (name,)))
                    if v is None:
                        return None
            if v <= 0:
                raise ExtentError(f"extent of {name} must be positive, got {v}")
            out[name] = v
            return v

        for name in list(decls) + [p for p in params if p not in decls]:
            v = value(name, ())
            if v is None and strict:
                raise ExtentError(f"unresolved extent for rank {name}")
        return out


_EXTENT_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z0-9_]*)|([*/+-]))")


def _eval_extent(text: str, lookup) -> int | None:
    """Evaluate ``a op b op c`` left to right; ``/`` is exact division."""
    tokens = []
    pos = 0
    while pos < len(text):
        m = _EXTENT_TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExtentError(f"bad extent expression {text!r}")
        pos = m.end()
        tokens.append(m.groups())
    acc: int | None = None
    op = None
    for num, name, sym in tokens:
        if sym:
            op = sym
            continue
        v = int(num) if num else lookup(name)
        if v is None:
            return None
        if acc is None:
            acc = v
        elif op == "*":
            acc *= v
        elif op == "+":
            acc += v
        elif op == "-":
            acc -= v
        elif op == "/":
            if acc % v:
                raise ExtentError(f"extent expression {text!r} is not an exact division ({acc}/{v})")
            acc //= v
    return acc


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


__all__ = [
    "Affine",
    "BINARY_OPS",
    "Cascade",
    "CascadeError",
    "ComputeOp",
    "Const",
    "DEFAULT_MERGE",
    "Einsum",
    "Expr",
    "ExtentError",
    "FILTER_OPS",
    "Filtered",
    "Fixed",
    "IterRank",
    "Map",
    "MergeOp",
    "RankDecl",
    "RankExpr",
    "REQUIRED_MERGE",
    "Reduction",
    "Role",
    "TensorDecl",
    "TensorRef",
    "UNARY_OPS",
    "Unary",
    "Var",
    "ceil_div",
    "expr_vars",
    "iterated_vars",
    "tensor_refs",
    "walk",
]
