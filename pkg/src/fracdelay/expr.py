"""A small expression language for right-hand sides, histories and exact solutions.

Grammar (whitespace is ignored)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right-associative
    atom   := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'

Names are the variables ``t``, ``u``, ``ud`` (the lagged value u(t - tau)),
the constant ``pi`` and any constants supplied at parse time.  Functions:
sin, cos, exp, ln, sqrt, gamma, abs, pow(x, y) and piecewise(b, left, right),
which is ``left`` where t <= b and ``right`` elsewhere.

Evaluation is vectorised over numpy arrays.  Domain violations raise
:class:`ExprDomainError` naming the offending subexpression.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import ExprDomainError, ExprError, ParseError, UnboundVariableError, UnknownIdentifierError
from .special import gamma_fn

VARIABLES = ("t", "u", "ud")
FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "ln": 1, "sqrt": 1, "gamma": 1, "abs": 1, "pow": 2, "piecewise": 3}
BUILTIN_CONSTANTS = {"pi": math.pi}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str
    value: float


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expr", ...]


Expr = Union[Num, Var, Const, Neg, Bin, Call]


# -- parsing -----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # "num", "name", "op" or "end"
    text: str
    offset: int  # byte offset into the UTF-8 source


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos = 0
    byte = lambda i: len(src[:i].encode("utf-8"))  # noqa: E731
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos >= len(src):
            toks.append(_Tok("end", "", byte(pos)))
            return toks
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {src[pos]!r}", byte(pos), frozenset({"number", "name", "operator"}))
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), byte(m.start(kind))))
        pos = m.end()


class _Parser:
    def __init__(self, src: str, constants: Mapping[str, float]):
        self.toks = _tokenize(src)
        self.i = 0
        self.constants = {**BUILTIN_CONSTANTS, **constants}

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def eat(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str, also: frozenset[str] = frozenset()) -> None:
        if not self.eat(text):
            raise ParseError(self._found(), self.tok.offset, frozenset({text}) | also)

    def _found(self) -> str:
        return "unexpected end of input" if self.tok.kind == "end" else f"unexpected token {self.tok.text!r}"

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise ParseError(self._found(), self.tok.offset, frozenset({"+", "-", "*", "/", "^", "end of input"}))
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            e = Bin(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            e = Bin(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.eat("-"):
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.eat("^"):
            return Bin("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            value = float(tok.text)
            if not math.isfinite(value):
                raise ParseError(f"number {tok.text!r} is out of range", tok.offset)
            return Num(value)
        if tok.kind == "name":
            self.i += 1
            if tok.text in FUNCTIONS:
                return self.call(tok)
            if tok.text in VARIABLES:
                return Var(tok.text)
            if tok.text in self.constants:
                return Const(tok.text, float(self.constants[tok.text]))
            raise UnknownIdentifierError(tok.text, tok.offset)
        if self.eat("("):
            e = self.expr()
            self.expect(")", frozenset({"+", "-", "*", "/", "^"}))
            return e
        raise ParseError(self._found(), tok.offset, frozenset({"number", "name", "(", "-"}))

    def call(self, name_tok: _Tok) -> Expr:
        self.expect("(")
        args = [self.expr()]
        while self.eat(","):
            args.append(self.expr())
        self.expect(")", frozenset({","}))
        arity = FUNCTIONS[name_tok.text]
        if len(args) != arity:
            raise ParseError(
                f"{name_tok.text} takes {arity} argument(s), got {len(args)}", name_tok.offset
            )
        return Call(name_tok.text, tuple(args))


def parse_expr(src: str, constants: Mapping[str, float] | None = None) -> Expr:
    """Parse ``src``; named constants are bound to their values now."""
    for name in constants or {}:
        if name in VARIABLES or name in FUNCTIONS:
            raise ExprError(f"constant name {name!r} shadows a variable or function")
    return _Parser(src, constants or {}).parse()


# -- printing ----------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e: Expr) -> int:
    if isinstance(e, Bin):
        return 4 if e.op == "^" else _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    return 5


def to_source(e: Expr) -> str:
    """Text that parses back to the same tree (given the same constants)."""
    if isinstance(e, Num):
        text = repr(e.value)
        return f"({text})" if e.value < 0 or text in ("inf", "nan") else text
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Const):
        return e.name
    if isinstance(e, Neg):
        inner = to_source(e.arg)
        return "-" + (f"({inner})" if _prec(e.arg) < 3 else inner)
    if isinstance(e, Call):
        return f"{e.name}({', '.join(to_source(a) for a in e.args)})"
    left, right = to_source(e.left), to_source(e.right)
    if e.op == "^":
        # the base is an atom; the exponent may be unary or another power
        if _prec(e.left) < 5:
            left = f"({left})"
        if _prec(e.right) < 3:
            right = f"({right})"
        return f"{left}^{right}"
    p = _PREC[e.op]
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}" if p == 1 else f"{left}*{right}" if e.op == "*" else f"{left}/{right}"


def free_variables(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset({e.name})
    if isinstance(e, (Num, Const)):
        return frozenset()
    if isinstance(e, Neg):
        return free_variables(e.arg)
    if isinstance(e, Bin):
        return free_variables(e.left) | free_variables(e.right)
    return frozenset().union(*(free_variables(a) for a in e.args))


# -- evaluation --------------------------------------------------------------


def _domain(cond, msg: str, e: Expr) -> None:
    if np.any(cond):
        raise ExprDomainError(msg, to_source(e))


def _power(base, ex, e: Expr):
    base, ex = np.broadcast_arrays(np.asarray(base, dtype=float), np.asarray(ex, dtype=float))
    _domain((base < 0) & (ex != np.round(ex)), "negative base with non-integer exponent", e)
    _domain((base == 0) & (ex < 0), "zero raised to a negative power", e)
    with np.errstate(over="ignore"):
        out = np.power(base, ex)
    _domain(np.isinf(out) & np.isfinite(base) & np.isfinite(ex), "overflow", e)
    return out


def _eval(e: Expr, env: Mapping[str, object]):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        if e.name not in env:
            raise UnboundVariableError(e.name)
        return np.asarray(env[e.name], dtype=float)
    if isinstance(e, Neg):
        return -_eval(e.arg, env)
    if isinstance(e, Bin):
        a, b = _eval(e.left, env), _eval(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            _domain(np.asarray(b) == 0, "division by zero", e)
            return a / b
        return _power(a, b, e)
    name = e.name
    if name == "piecewise":
        return _piecewise(e, env)
    args = [_eval(a, env) for a in e.args]
    x = np.asarray(args[0], dtype=float)
    if name == "sin":
        return np.sin(x)
    if name == "cos":
        return np.cos(x)
    if name == "exp":
        with np.errstate(over="ignore"):
            out = np.exp(x)
        _domain(np.isinf(out) & np.isfinite(x), "overflow", e)
        return out
    if name == "ln":
        _domain(x <= 0, "logarithm of a non-positive value", e)
        return np.log(x)
    if name == "sqrt":
        _domain(x < 0, "square root of a negative value", e)
        return np.sqrt(x)
    if name == "abs":
        return np.abs(x)
    if name == "gamma":
        _domain((x <= 0) & (x == np.round(x)), "gamma pole at a non-positive integer", e)
        return gamma_fn(x)
    return _power(x, args[1], e)


def _piecewise(e: Call, env: Mapping[str, object]):
    if "t" not in env:
        raise UnboundVariableError("t")
    t = np.asarray(env["t"], dtype=float)
    bound = np.broadcast_to(np.asarray(_eval(e.args[0], env), dtype=float), t.shape)
    left = t <= bound
    out = np.empty(t.shape)
    # each branch is evaluated only where it is selected, so the unused branch
    # cannot raise a spurious domain error
    for mask, branch in ((left, e.args[1]), (~left, e.args[2])):
        if np.any(mask):
            sub = {k: (np.broadcast_to(np.asarray(v, dtype=float), t.shape)[mask] if np.ndim(v) else v) for k, v in env.items()}
            out[mask] = _eval(branch, sub)
    return out if t.ndim else float(out)


def eval_expr(e: Expr, bindings: Mapping[str, object] | None = None, **kw):
    """Evaluate with the variables bound (scalars or broadcastable arrays).

    Extra named constants in ``bindings`` are ignored unless referenced; they
    were bound at parse time.
    """
    env = {**(bindings or {}), **kw}
    shapes = [np.shape(v) for v in env.values()]
    out = _eval(e, env)
    shape = np.broadcast_shapes(*shapes) if shapes else ()
    out = np.broadcast_to(np.asarray(out, dtype=float), shape)
    bad = ~np.isfinite(out)
    if np.any(bad):
        raise ExprDomainError("non-finite result", to_source(e))
    return float(out) if out.ndim == 0 else np.array(out)


# -- differentiation ---------------------------------------------------------

_ZERO, _ONE = Num(0.0), Num(1.0)


def _add(a: Expr, b: Expr) -> Expr:
    if a == _ZERO:
        return b
    if b == _ZERO:
        return a
    return Bin("+", a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if b == _ZERO:
        return a
    if a == _ZERO:
        return _neg(b)
    return Bin("-", a, b)


def _neg(a: Expr) -> Expr:
    if a == _ZERO:
        return a
    return a.arg if isinstance(a, Neg) else Neg(a)


def _mul(a: Expr, b: Expr) -> Expr:
    if a == _ZERO or b == _ZERO:
        return _ZERO
    if a == _ONE:
        return b
    if b == _ONE:
        return a
    return Bin("*", a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if a == _ZERO:
        return _ZERO
    return a if b == _ONE else Bin("/", a, b)


def derivative(e: Expr, var: str = "t") -> Expr:
    """Symbolic d/d(var).  Other variables must not appear in t-dependent parts."""
    if var not in free_variables(e):
        return _ZERO
    if isinstance(e, Var):
        return _ONE
    if isinstance(e, Neg):
        return _neg(derivative(e.arg, var))
    if isinstance(e, Bin):
        a, b = e.left, e.right
        da, db = derivative(a, var), derivative(b, var)
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        if e.op == "/":
            return _div(_sub(_mul(da, b), _mul(a, db)), Bin("^", b, Num(2.0)))
        return _d_power(a, b, da, db, var)
    name, args = e.name, e.args
    if name == "piecewise":
        if var in free_variables(args[0]):
            raise ExprError("piecewise boundary must not depend on the differentiation variable")
        return Call("piecewise", (args[0], derivative(args[1], var), derivative(args[2], var)))
    if name == "pow":
        return _d_power(args[0], args[1], derivative(args[0], var), derivative(args[1], var), var)
    x = args[0]
    dx = derivative(x, var)
    if name == "sin":
        inner = Call("cos", (x,))
    elif name == "cos":
        inner = _neg(Call("sin", (x,)))
    elif name == "exp":
        inner = e
    elif name == "ln":
        return _div(dx, x)
    elif name == "sqrt":
        return _div(dx, _mul(Num(2.0), e))
    elif name == "abs":
        inner = _div(x, e)
    else:
        raise ExprError("the derivative of gamma of a variable argument is not supported")
    return _mul(inner, dx)


def _d_power(b: Expr, ex: Expr, db: Expr, dex: Expr, var: str) -> Expr:
    if var not in free_variables(ex):
        lowered = ex.value - 1.0 if isinstance(ex, Num) else Bin("-", ex, _ONE)
        lowered = Num(lowered) if isinstance(lowered, float) else lowered
        return _mul(_mul(ex, Bin("^", b, lowered)), db)
    # d(b^e) = b^e (e' ln b + e b' / b)
    return _mul(Bin("^", b, ex), _add(_mul(dex, Call("ln", (b,))), _div(_mul(ex, db), b)))


def derivative_n(e: Expr, order: int, var: str = "t") -> Expr:
    for _ in range(order):
        e = derivative(e, var)
    return e
