"""Expression DSL for coordinate functions.

Grammar (whitespace insignificant)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := ['-'] base ('^' ['-'] integer)?
    base   := number | ident | func '(' expr ')' | '(' expr ')'

Identifiers are ``x1`` .. ``xn``; functions are the unary ones listed in
:data:`FUNCTIONS`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import jet as J
from .jet import Jet

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "atan")


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class DomainError(ArithmeticError):
    def __init__(self, node: "Expr", point, reason: str):
        pt = np.asarray(point).tolist()
        super().__init__(f"{reason} in '{to_source(node)}' at x={pt}")
        self.node = node
        self.point = pt


# AST ---------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # zero based


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Sum:
    terms: tuple[tuple[str, "Expr"], ...]  # (sign, term); first sign is '+'


@dataclass(frozen=True)
class Product:
    factors: tuple[tuple[str, "Expr"], ...]  # ('*'|'/', factor); first op is '*'


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, Sum, Product, Pow, Call]


def depth(e: Expr) -> int:
    """Nesting depth of operator nodes; leaves have depth 0."""
    if isinstance(e, (Num, Var)):
        return 0
    if isinstance(e, Neg):
        return 1 + depth(e.arg)
    if isinstance(e, Sum):
        return 1 + max(depth(t) for _, t in e.terms)
    if isinstance(e, Product):
        return 1 + max(depth(f) for _, f in e.factors)
    if isinstance(e, Pow):
        return 1 + depth(e.base)
    return 1 + depth(e.arg)


def variables(e: Expr) -> set[int]:
    if isinstance(e, Var):
        return {e.index}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Sum):
        return set().union(*(variables(t) for _, t in e.terms))
    if isinstance(e, Product):
        return set().union(*(variables(f) for _, f in e.factors))
    if isinstance(e, Pow):
        return variables(e.base)
    return variables(e.arg)


# parsing -----------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)|(?P<nl>\n)|
    (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|
    (?P<ident>[A-Za-z_][A-Za-z_0-9]*)|
    (?P<op>[-+*/^(),])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(source: str) -> list[_Tok]:
    toks, pos, line, line_start = [], 0, 1, 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line, line_start = line + 1, m.end()
        elif kind != "ws":
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("end", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, source: str, n: int | None):
        self.toks = _tokenize(source)
        self.i = 0
        self.n = n

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def fail(self, message: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise ParseError(message, tok.line, tok.col)

    def eat(self, text: str) -> _Tok:
        tok = self.tok
        if tok.text != text or tok.kind not in ("op",):
            what = "end of input" if tok.kind == "end" else repr(tok.text)
            self.fail(f"syntax error: expected {text!r}, found {what}")
        self.i += 1
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            self.fail(f"syntax error: unexpected {self.tok.text!r}")
        return e

    def expr(self) -> Expr:
        terms = [("+", self.term())]
        while self.tok.kind == "op" and self.tok.text in "+-":
            sign = self.tok.text
            self.i += 1
            terms.append((sign, self.term()))
        return terms[0][1] if len(terms) == 1 else Sum(tuple(terms))

    def term(self) -> Expr:
        factors = [("*", self.factor())]
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            factors.append((op, self.factor()))
        return factors[0][1] if len(factors) == 1 else Product(tuple(factors))

    def factor(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.i += 1
            return Neg(self.factor())
        base = self.base()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.i += 1
            sign = 1
            if self.tok.kind == "op" and self.tok.text == "-":
                sign = -1
                self.i += 1
            tok = self.tok
            if tok.kind != "num" or not tok.text.isdigit():
                self.fail("syntax error: exponent must be an integer")
            self.i += 1
            base = Pow(base, sign * int(tok.text))
        return base

    def base(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.i += 1
            if tok.text in FUNCTIONS:
                self.eat("(")
                arg = self.expr()
                if self.tok.text == ",":
                    self.fail(f"arity mismatch: {tok.text} takes exactly one argument")
                self.eat(")")
                return Call(tok.text, arg)
            m = re.fullmatch(r"x([1-9][0-9]*)", tok.text)
            if m is None:
                self.fail(f"unknown identifier {tok.text!r}", tok)
            k = int(m.group(1))
            if self.n is not None and k > self.n:
                self.fail(f"unknown identifier {tok.text!r} (dimension is {self.n})", tok)
            return Var(k - 1)
        if tok.kind == "op" and tok.text == "(":
            self.i += 1
            e = self.expr()
            self.eat(")")
            return e
        what = "end of input" if tok.kind == "end" else repr(tok.text)
        self.fail(f"syntax error: unexpected {what}")


def parse(source: str, n: int | None = None) -> Expr:
    """Parse DSL text into an AST; ``n`` bounds the admissible ``x`` indices."""
    return _Parser(source, n).parse()


# printing ----------------------------------------------------------------

def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_source(e: Expr) -> str:
    """Render an AST as DSL text that parses back to the same AST."""
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return f"x{e.index + 1}"
    if isinstance(e, Neg):
        inner = to_source(e.arg)
        return f"-{inner}" if isinstance(e.arg, (Num, Var, Call, Neg)) else f"-({inner})"
    if isinstance(e, Sum):
        parts = []
        for k, (sign, t) in enumerate(e.terms):
            s = to_source(t)
            if isinstance(t, (Sum, Neg)) or (k == 0 and sign == "-" and isinstance(t, (Product, Pow))):
                s = f"({s})"
            if k == 0:
                parts.append(f"-{s}" if sign == "-" else s)
            else:
                parts.append(f" {sign} {s}")
        return "".join(parts)
    if isinstance(e, Product):
        parts = []
        for k, (op, f) in enumerate(e.factors):
            s = to_source(f)
            if isinstance(f, (Sum, Product, Neg)):
                s = f"({s})"
            parts.append(s if k == 0 else f"{op}{s}")
        return "".join(parts)
    if isinstance(e, Pow):
        s = to_source(e.base)
        if not isinstance(e.base, (Num, Var, Call)) or (isinstance(e.base, Num) and e.base.value < 0):
            s = f"({s})"
        return f"{s}^{e.exponent}"
    return f"{e.func}({to_source(e.arg)})"


# evaluation --------------------------------------------------------------

_NUMPY_FUNCS = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
                "log": np.log, "sqrt": np.sqrt, "atan": np.arctan}
_JET_FUNCS = {"sin": J.sin, "cos": J.cos, "tan": J.tan, "exp": J.exp,
              "log": J.log, "sqrt": J.sqrt, "atan": J.atan}


def evaluate(e: Expr, x) -> np.ndarray:
    """Plain value of ``e`` at ``x`` (shape ``(..., n)``), vectorised over leading axes."""
    x = np.asarray(x, dtype=float)
    return _eval(e, x, x, _NUMPY_FUNCS, _value_leaf)


def _value_leaf(e, x):
    if isinstance(e, Num):
        return np.full(x.shape[:-1], e.value)
    return x[..., e.index]


def eval_jet(e: Expr, x, space: J.JetSpace | int = 3) -> Jet:
    """Taylor jet of ``e`` around ``x``.

    ``space`` is either a :class:`JetSpace` whose first ``n`` variables are the
    coordinates, or an integer order for an x-only space.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(space, int):
        space = J.x_space(x.shape[-1], space)
    leaves = [Jet.variable(space, k, x[..., k]) for k in range(x.shape[-1])]

    def leaf(node, _):
        if isinstance(node, Num):
            return Jet.constant(space, np.full(x.shape[:-1], node.value))
        return leaves[node.index]

    return _eval(e, x, x, _JET_FUNCS, leaf)


def _check(cond, node, point, reason):
    if np.any(cond):
        raise DomainError(node, point, reason)


def _base(v):
    return v.value if isinstance(v, Jet) else v


def _eval(e, x, point, funcs, leaf):
    if isinstance(e, (Num, Var)):
        if isinstance(e, Var) and e.index >= x.shape[-1]:
            raise DomainError(e, point, f"variable x{e.index + 1} outside dimension {x.shape[-1]}")
        return leaf(e, x)
    if isinstance(e, Neg):
        return -_eval(e.arg, x, point, funcs, leaf)
    if isinstance(e, Sum):
        out = None
        for sign, t in e.terms:
            v = _eval(t, x, point, funcs, leaf)
            if out is None:
                out = v if sign == "+" else -v
            else:
                out = out + v if sign == "+" else out - v
        return out
    if isinstance(e, Product):
        out = None
        for op, f in e.factors:
            v = _eval(f, x, point, funcs, leaf)
            if op == "/":
                _check(_base(v) == 0.0, e, point, "division by zero")
                out = (1.0 / v) if out is None else out / v
            else:
                out = v if out is None else out * v
        return out
    if isinstance(e, Pow):
        v = _eval(e.base, x, point, funcs, leaf)
        if e.exponent < 0:
            _check(_base(v) == 0.0, e, point, "division by zero")
        if isinstance(v, Jet):
            return v ** e.exponent
        return np.power(v, float(e.exponent))
    v = _eval(e.arg, x, point, funcs, leaf)
    b = _base(v)
    if e.func == "log":
        _check(b <= 0.0, e, point, "log of non-positive value")
    elif e.func == "sqrt":
        # sqrt is not differentiable at 0, so jets reject it there
        _check(b < 0.0 if not isinstance(v, Jet) else b <= 0.0, e, point,
               "sqrt of negative value")
    elif e.func == "tan":
        _check(np.isclose(np.cos(b), 0.0, atol=1e-15), e, point, "tan pole")
    return funcs[e.func](v)


def constant_expr(value: float) -> Expr:
    return Num(float(value)) if value >= 0 else Neg(Num(float(-value)))


def is_constant(e: Expr) -> bool:
    return not variables(e)


def as_expr(e: Expr | str | float, n: int | None = None) -> Expr:
    if isinstance(e, str):
        return parse(e, n)
    if isinstance(e, (int, float)):
        return constant_expr(float(e))
    return e


__all__ = ["Expr", "Num", "Var", "Neg", "Sum", "Product", "Pow", "Call", "ParseError",
           "DomainError", "parse", "to_source", "evaluate", "eval_jet", "depth",
           "variables", "as_expr", "FUNCTIONS"]
