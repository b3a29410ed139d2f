"""Reader and writer for ``.cas`` cascade files.

The grammar is line oriented; see ``docs/dsl.md`` for the full description.
A short example::

    rank K
    input A[K]
    input B[K]
    tensor Y[]
    output Z[]

    Y = sum[k]( A[k] * B[k] )
    Z = sum[k]( Y * A[k] )   # second pass over K
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

from .ir import (
    Affine,
    Cascade,
    CascadeError,
    ComputeOp,
    Const,
    DEFAULT_MERGE,
    Einsum,
    Expr,
    FILTER_OPS,
    Filtered,
    Fixed,
    IterRank,
    Map,
    MergeOp,
    RankDecl,
    RankExpr,
    Reduction,
    Role,
    TensorDecl,
    TensorRef,
    Unary,
    Var,
    iterated_vars,
    tensor_refs,
)


class DSLSyntaxError(CascadeError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


class CascadeValidationError(CascadeError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "\n".join(f"  {d}" for d in self.diagnostics)
        super().__init__(f"invalid cascade:\n{lines}")


REDUCE_OPS = {"sum": ComputeOp.ADD, "max": ComputeOp.MAX}
REDUCE_NAMES = {v: k for k, v in REDUCE_OPS.items()}

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|[=\[\](),:<>+\-*/])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num, name, op, end
    text: str
    col: int


def _tokenize(text: str, lineno: int) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise DSLSyntaxError(f"unexpected character {text[pos]!r}", lineno, pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), pos + 1))
        pos = m.end()
    toks.append(_Tok("end", "", len(text) + 1))
    return toks


def _split_comment(line: str) -> tuple[str, str | None]:
    code, sep, comment = line.partition("#")
    return code, (comment.strip() if sep else None)


class _LineParser:
    """Recursive-descent parser over the tokens of one statement."""

    def __init__(self, toks: list[_Tok], lineno: int, rank_names: set[str]):
        self.toks = toks
        self.i = 0
        self.lineno = lineno
        self.rank_names = rank_names

    # -- token helpers ----------------------------------------------------
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, message: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise DSLSyntaxError(message, self.lineno, tok.col)

    def accept(self, text: str) -> bool:
        if self.tok.kind in ("op", "name") and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        if not (self.tok.kind in ("op", "name") and self.tok.text == text):
            found = self.tok.text or "end of line"
            self.error(f"expected {text!r}, found {found!r}")
        t = self.tok
        self.i += 1
        return t

    def name(self) -> str:
        if self.tok.kind != "name":
            self.error(f"expected a name, found {self.tok.text or 'end of line'!r}")
        t = self.tok
        self.i += 1
        return t.text

    def integer(self) -> int:
        if self.tok.kind != "num" or not self.tok.text.isdigit():
            self.error("expected an integer")
        t = self.tok
        self.i += 1
        return int(t.text)

    def end(self):
        if self.tok.kind != "end":
            self.error(f"unexpected {self.tok.text!r}")

    # -- declarations -----------------------------------------------------
    def rank_list(self) -> tuple[str, ...]:
        self.expect("[")
        names: list[str] = []
        if not self.accept("]"):
            names.append(self.name())
            while self.accept(","):
                names.append(self.name())
            self.expect("]")
        return tuple(names)

    def extent_expr(self) -> int | str:
        parts = []
        while self.tok.kind != "end":
            t = self.tok
            if t.kind == "num" and t.text.isdigit():
                parts.append(t.text)
            elif t.kind == "name":
                parts.append(t.text)
            elif t.kind == "op" and t.text in "*/+-":
                parts.append(t.text)
            else:
                self.error(f"unexpected {t.text!r} in extent")
            self.i += 1
        if not parts:
            self.error("missing extent")
        if len(parts) == 1 and parts[0].isdigit():
            return int(parts[0])
        return "".join(parts)

    # -- rank expressions -------------------------------------------------
    def subscripts(self) -> tuple[RankExpr, ...]:
        self.expect("[")
        subs: list[RankExpr] = []
        if not self.accept("]"):
            subs.append(self.subscript())
            while self.accept(","):
                subs.append(self.subscript())
            self.expect("]")
        return tuple(subs)

    def subscript(self) -> RankExpr:
        if self.tok.kind == "name" and self.peek().text == ":" and self.tok.text not in self.rank_names:
            start = self.tok
            var = self.name()
            self.expect(":")
            again = self.name()
            if again != var:
                self.error(f"filter must constrain {var!r}, found {again!r}", start)
            op_tok = self.tok
            if op_tok.text not in FILTER_OPS:
                self.error(f"expected a comparison, found {op_tok.text!r}")
            self.i += 1
            bound = self.affine()
            if isinstance(bound, Fixed):
                self.error("filter bound must mention a rank variable", op_tok)
            return Filtered(var, op_tok.text, bound)
        return self.affine()

    def affine(self) -> RankExpr:
        start = self.tok
        terms: list[tuple[int | str, str]] = []
        offset = 0
        symbol_alone: str | None = None
        sign = 1
        first = True
        n_items = 0
        while True:
            if not first or self.tok.text == "-":
                if self.accept("+"):
                    sign = 1
                elif self.accept("-"):
                    sign = -1
                elif not first:
                    break
            first = False
            n_items += 1
            t = self.tok
            if t.kind == "num":
                value = self.integer()
                if self.accept("*"):
                    var = self.name()
                    if var in self.rank_names:
                        self.error(f"{var!r} is a rank, not a rank variable", t)
                    if sign < 0:
                        self.error("affine coefficients must be nonnegative", t)
                    terms.append((value, var))
                else:
                    offset += sign * value
            elif t.kind == "name":
                first_name = self.name()
                if self.accept("*"):
                    t2 = self.tok
                    if t2.kind == "num":
                        coef: int | str = self.integer()
                        var = first_name
                    else:
                        other = self.name()
                        if first_name in self.rank_names and other not in self.rank_names:
                            coef, var = first_name, other
                        elif other in self.rank_names and first_name not in self.rank_names:
                            coef, var = other, first_name
                        else:
                            self.error("a product term needs one rank variable and one rank or integer", t)
                    if sign < 0:
                        self.error("affine coefficients must be nonnegative", t)
                    terms.append((coef, var))
                elif first_name in self.rank_names:
                    symbol_alone = first_name
                else:
                    if sign < 0:
                        self.error("affine coefficients must be nonnegative", t)
                    terms.append((1, first_name))
            else:
                self.error(f"expected a rank expression, found {t.text or 'end of line'!r}")
        if symbol_alone is not None:
            if n_items != 1:
                self.error(f"rank symbol {symbol_alone!r} can only be used alone as a fixed coordinate", start)
            return Fixed(symbol_alone)
        if not terms:
            if offset < 0:
                self.error("coordinates must be nonnegative", start)
            return Fixed(offset)
        if len(terms) == 1 and terms[0][0] == 1 and offset == 0:
            return Var(terms[0][1])
        return Affine(tuple(terms), offset)

    # -- expressions ------------------------------------------------------
    def tensor_ref(self) -> TensorRef:
        name = self.name()
        if self.tok.text == "[":
            return TensorRef(name, self.subscripts())
        return TensorRef(name, ())

    def rhs(self) -> tuple[Expr, tuple[Reduction, ...]]:
        if self.tok.kind == "name" and self.tok.text in REDUCE_OPS and self.peek().text == "[":
            op = REDUCE_OPS[self.name()]
            self.expect("[")
            rvars = [self.name()]
            while self.accept(","):
                rvars.append(self.name())
            self.expect("]")
            self.expect("(")
            inner, inner_red = self.rhs()
            self.expect(")")
            reds = tuple(Reduction(v, op, MergeOp.UNION) for v in rvars)
            return inner, reds + inner_red
        return self.expr(), ()

    def expr(self) -> Expr:
        left = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            if self.accept("+"):
                right = self.term()
            else:
                self.i += 1
                right = _negate(self.term())
            left = Map(ComputeOp.ADD, MergeOp.UNION, left, right)
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.tok.text in ("*", "/") and self.tok.kind == "op":
            if self.accept("*"):
                left = Map(ComputeOp.MUL, MergeOp.INTERSECT, left, self.unary())
            else:
                self.i += 1
                left = Map(ComputeOp.DIV, MergeOp.RIGHT_GATED, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.i += 1
            return _negate(self.unary())
        return self.atom()

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Const(float(t.text))
        if t.kind == "op" and t.text == "(":
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        if t.kind != "name":
            self.error(f"expected an expression, found {t.text or 'end of line'!r}")
        nxt = self.peek()
        if nxt.text == "(":
            return self.call()
        if t.text == "inf" and nxt.text != "[":
            self.i += 1
            return Const(math.inf)
        if t.text in REDUCE_OPS and nxt.text == "[":
            self.error("reductions are only allowed at the start of the right-hand side")
        return self.tensor_ref()

    def call(self) -> Expr:
        tok = self.tok
        fname = self.name()
        self.expect("(")
        args = [self.expr()]
        while self.accept(","):
            args.append(self.expr())
        self.expect(")")
        if fname == "exp":
            if len(args) != 1:
                self.error("exp takes one argument", tok)
            a = args[0]
            if isinstance(a, Map) and a.op is ComputeOp.ADD and isinstance(a.right, Unary) and a.right.op is ComputeOp.NEG:
                return Map(ComputeOp.SUB_EXP, MergeOp.PASS_THROUGH, a.left, a.right.operand)
            if isinstance(a, Map) and a.op is ComputeOp.ADD and isinstance(a.right, Const) and a.right.value < 0:
                return Map(ComputeOp.SUB_EXP, MergeOp.PASS_THROUGH, a.left, Const(-a.right.value))
            return Unary(ComputeOp.EXP, a)
        if fname == "max":
            if len(args) != 2:
                self.error("max takes two arguments", tok)
            return Map(ComputeOp.MAX, MergeOp.UNION, args[0], args[1])
        if len(args) == 1:
            return Unary(ComputeOp.USER, args[0], tag=fname)
        if len(args) == 2:
            return Map(ComputeOp.USER, MergeOp.PASS_THROUGH, args[0], args[1], tag=fname)
        self.error(f"user operator {fname!r} takes one or two arguments", tok)


def _negate(e: Expr) -> Expr:
    if isinstance(e, Const):
        return Const(-e.value)
    return Unary(ComputeOp.NEG, e)


# --------------------------------------------------------------------------
# File-level parsing
# --------------------------------------------------------------------------

_ITER_HEADER = re.compile(r"^iter\s+([A-Za-z_][A-Za-z0-9_]*)\s*<\s*([A-Za-z_][A-Za-z0-9_]*|\d+)\s*:$")


def parse_cascade(source: str, name: str | None = None, check: bool = True) -> Cascade:
    """Parse ``.cas`` text into a :class:`Cascade`.

    Raises :class:`DSLSyntaxError` (with line/column) on malformed text and,
    when ``check`` is true, :class:`CascadeValidationError` when the result
    breaks an IR invariant.
    """
    lines = source.splitlines()
    rank_names = set()
    for raw in lines:
        code, _ = _split_comment(raw)
        words = code.split()
        if len(words) >= 2 and words[0] == "rank":
            rank_names.add(words[1].split("=")[0])

    ranks: list[RankDecl] = []
    tensors: list[TensorDecl] = []
    init: list[Einsum] = []
    body: list[Einsum] = []
    iterative: list[IterRank] = []
    section = "body"

    for lineno, raw in enumerate(lines, start=1):
        code, comment = _split_comment(raw)
        stripped = code.strip()
        if not stripped:
            continue
        if stripped == "init:":
            section = "init"
            continue
        if stripped == "body:":
            section = "body"
            continue
        if stripped.startswith("iter ") or stripped.startswith("iter\t"):
            m = _ITER_HEADER.match(stripped)
            if not m:
                raise DSLSyntaxError("malformed iter header, expected 'iter <var> < <Rank>:'", lineno, code.index("iter") + 1)
            stop = m.group(2)
            iterative.append(IterRank(m.group(1), int(stop) if stop.isdigit() else stop))
            section = "body"
            continue
        toks = _tokenize(code, lineno)
        p = _LineParser(toks, lineno, rank_names)
        head = toks[0]
        if head.kind == "name" and head.text == "rank" and toks[1].kind == "name":
            p.i = 1
            rname = p.name()
            extent = p.extent_expr() if p.accept("=") else None
            p.end()
            ranks.append(RankDecl(rname, extent))
        elif head.kind == "name" and head.text in ("input", "output", "tensor") and toks[1].kind == "name" and toks[2].text in ("[", ""):
            p.i = 1
            tname = p.name()
            tranks = p.rank_list() if p.tok.text == "[" else ()
            p.end()
            tensors.append(TensorDecl(tname, tranks, Role(head.text)))
        else:
            out = p.tensor_ref()
            p.expect("=")
            expr, reds = p.rhs()
            p.end()
            e = Einsum(out, expr, reds, comment)
            (init if section == "init" else body).append(e)

    iter_vars = {it.var for it in iterative}
    init = [_implicit_reductions(e, iter_vars, in_init=True) for e in init]
    body = [_implicit_reductions(e, iter_vars, in_init=False) for e in body]
    cascade = Cascade(tuple(ranks), tuple(tensors), tuple(init), tuple(body), tuple(iterative), name=name)
    if check:
        from .validate import validate

        diags = validate(cascade)
        if diags:
            raise CascadeValidationError(diags)
    return cascade


def _implicit_reductions(e: Einsum, iter_vars: set[str], in_init: bool) -> Einsum:
    """Shorthand: variables that appear only on the right are summed away."""
    if e.reductions:
        return e
    out_vars = {v for s in e.output.subscripts for v in iterated_vars(s)}
    bound = set() if in_init else set(iter_vars)
    missing: list[str] = []
    for ref in tensor_refs(e.expr):
        for s in ref.subscripts:
            for v in iterated_vars(s):
                if v not in out_vars and v not in bound and v not in missing:
                    missing.append(v)
    if not missing:
        return e
    return Einsum(e.output, e.expr, tuple(Reduction(v) for v in missing), e.comment)


def load_cascade(path: str | Path, check: bool = True) -> Cascade:
    path = Path(path)
    return parse_cascade(path.read_text(encoding="utf-8"), name=path.stem, check=check)


# --------------------------------------------------------------------------
# Rendering
# --------------------------------------------------------------------------


def render_rank_expr(s: RankExpr) -> str:
    if isinstance(s, Var):
        return s.name
    if isinstance(s, Fixed):
        return str(s.value)
    if isinstance(s, Filtered):
        return f"{s.var}:{s.var}{s.op}{render_rank_expr(s.bound)}"
    parts = []
    for coef, var in s.terms:
        if coef == 1:
            parts.append(var)
        elif isinstance(coef, int):
            parts.append(f"{coef}*{var}")
        else:
            parts.append(f"{var}*{coef}")
    text = "+".join(parts)
    if s.offset > 0:
        text += f"+{s.offset}"
    elif s.offset < 0:
        text += f"-{-s.offset}"
    return text


def render_ref(r: TensorRef) -> str:
    if not r.subscripts:
        return r.name
    return f"{r.name}[{','.join(render_rank_expr(s) for s in r.subscripts)}]"


def _render_const(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


_PREC = {ComputeOp.ADD: 1, ComputeOp.MUL: 2, ComputeOp.DIV: 2}


def _prec(e: Expr) -> int:
    if isinstance(e, Map) and e.op in _PREC:
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op is ComputeOp.NEG:
        return 3
    if isinstance(e, Const) and e.value < 0:
        return 3
    return 4


def render_expr(e: Expr) -> str:
    if isinstance(e, TensorRef):
        return render_ref(e)
    if isinstance(e, Const):
        return _render_const(e.value)
    if isinstance(e, Unary):
        if e.op is ComputeOp.NEG:
            inner = render_expr(e.operand)
            return f"-{inner}" if _prec(e.operand) >= 3 else f"-({inner})"
        if e.op is ComputeOp.EXP:
            return f"exp({render_expr(e.operand)})"
        return f"{e.tag}({render_expr(e.operand)})"
    if e.op is ComputeOp.SUB_EXP:
        right = render_expr(e.right)
        if _prec(e.right) <= 1:
            right = f"({right})"
        return f"exp({render_expr(e.left)} - {right})"
    if e.op is ComputeOp.MAX:
        return f"max({render_expr(e.left)}, {render_expr(e.right)})"
    if e.op is ComputeOp.USER:
        return f"{e.tag}({render_expr(e.left)}, {render_expr(e.right)})"
    own = _PREC[e.op]
    left = render_expr(e.left)
    if _prec(e.left) < own:
        left = f"({left})"
    if e.op is ComputeOp.ADD and isinstance(e.right, Unary) and e.right.op is ComputeOp.NEG:
        right = render_expr(e.right.operand)
        if _prec(e.right.operand) <= own:
            right = f"({right})"
        return f"{left} - {right}"
    right = render_expr(e.right)
    if _prec(e.right) <= own:
        right = f"({right})"
    symbol = {ComputeOp.ADD: "+", ComputeOp.MUL: "*", ComputeOp.DIV: "/"}[e.op]
    return f"{left} {symbol} {right}"


def render_einsum(e: Einsum) -> str:
    rhs = render_expr(e.expr)
    groups: list[tuple[ComputeOp, list[str]]] = []
    for r in e.reductions:
        if groups and groups[-1][0] is r.op:
            groups[-1][1].append(r.var)
        else:
            groups.append((r.op, [r.var]))
    for op, rvars in reversed(groups):
        rhs = f"{REDUCE_NAMES.get(op, op.value)}[{','.join(rvars)}]( {rhs} )"
    text = f"{render_ref(e.output)} = {rhs}"
    if e.comment:
        text += f"  # {e.comment}"
    return text


def render_cascade(c: Cascade) -> str:
    """Canonical text for ``c``; ``parse_cascade`` reads it back unchanged."""
    out: list[str] = []
    for r in c.ranks:
        out.append(f"rank {r.name}" if r.extent is None else f"rank {r.name} = {r.extent}")
    for t in c.tensors:
        out.append(f"{t.role.value} {t.name}[{', '.join(t.ranks)}]")
    if c.init:
        out.append("")
        out.append("init:")
        out.extend(f"  {render_einsum(e)}" for e in c.init)
    if c.body or c.iterative:
        out.append("")
        if c.iterative:
            out.extend(f"iter {it.var} < {it.stop}:" for it in c.iterative)
            indent = "  "
        elif c.init:
            out.append("body:")
            indent = "  "
        else:
            indent = ""
        out.extend(f"{indent}{render_einsum(e)}" for e in c.body)
    return "\n".join(out) + "\n"


def check_merge_defaults(e: Expr) -> bool:
    """True when every map action carries the merge its operator implies."""
    if isinstance(e, Map):
        return DEFAULT_MERGE.get(e.op) is e.merge and check_merge_defaults(e.left) and check_merge_defaults(e.right)
    if isinstance(e, Unary):
        return check_merge_defaults(e.operand)
    return True
