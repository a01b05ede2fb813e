"""Benchmark problems and the text problem-file format.

A problem file is line oriented, with ``[section]`` headers and ``key = value``
lines; ``#`` starts a comment.  Sections:

``[constants]``
    ``name = <number expression>``; later constants may use earlier ones.
``[problem]``
    ``nu`` (leading Caputo order), ``tau``, ``horizon``, optional ``A`` (comma
    separated A_0, A_1, ..., A_n of the integer-order part), optional ``n``
    (checked against A), optional ``terms`` (``nu=..., lambda=...`` items
    separated by ``;``) and optional ``table`` (comma separated sample times).
    Values are expressions over the constants; ``nu`` and ``tau`` are
    themselves available to the later keys and to every expression.
``[rhs]``
    ``f = <expr in t, u, ud>``; ``ud`` is the lagged value u(t - tau).
``[history]``
    ``phi = <expr in t>`` on [-tau, 0].
``[constraints]``
    one ``point=..., order=..., value=...`` line per extra condition.
``[exact]``
    optional ``u = <expr in t>``.

The model solved is ``sum_j A_j u^(j) + D^nu u + sum_p lambda_p D^nu_p u = f``.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .errors import ConfigError, ExprError, ParseError
from .expr import Expr, derivative_n, eval_expr, free_variables, parse_expr, to_source
from .special import gamma_fn
from .stepper import FDDEProblem

SECTIONS = ("constants", "problem", "rhs", "history", "constraints", "exact")
_PROBLEM_KEYS = ("nu", "tau", "horizon", "A", "n", "terms", "table")


class ProblemFileError(ConfigError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ProblemExprError(ProblemFileError, ExprError):
    """An expression inside a problem file failed to parse."""


@dataclass(frozen=True)
class _Entry:
    key: str
    value: str
    line: int
    column: int  # column where ``value`` starts (1-based)


@dataclass(frozen=True)
class ProblemDef:
    """Parsed problem definition; expressions keep their source for printing."""

    name: str
    constants: dict[str, float]
    nu: float
    tau: float
    horizon: float
    rhs: Expr
    history: Expr
    A: tuple[float, ...] = ()
    terms: tuple[tuple[float, float], ...] = ()
    constraints: tuple[tuple[float, int, float], ...] = ()
    exact: Expr | None = None
    table: tuple[float, ...] = ()
    source: str = field(default="", repr=False, compare=False)

    def history_fn(self):
        cache: dict[int, Expr] = {}

        def phi(t, m: int = 0):
            if m not in cache:
                cache[m] = derivative_n(self.history, m)
            t = np.asarray(t, dtype=float)
            return np.broadcast_to(eval_expr(cache[m], t=t), t.shape).astype(float)

        return phi

    def rhs_fn(self):
        e = self.rhs
        return lambda t, u, ud: eval_expr(e, t=t, u=u, ud=ud)

    def exact_fn(self):
        if self.exact is None:
            return None
        e = self.exact
        return lambda t: eval_expr(e, t=np.asarray(t, dtype=float))

    def to_problem(self) -> FDDEProblem:
        return FDDEProblem(
            nu=self.nu,
            tau=self.tau,
            horizon=self.horizon,
            rhs=self.rhs_fn(),
            history=self.history_fn(),
            A=self.A,
            terms=self.terms,
            extra_constraints=self.constraints,
            exact=self.exact_fn(),
            name=self.name,
        )

    def to_text(self) -> str:
        """Normalised problem file (numbers at full precision)."""
        g = lambda v: repr(float(v))  # noqa: E731
        lines = [f"# {self.name}" if self.name else "# problem", "[constants]"]
        lines += [f"{k} = {g(v)}" for k, v in self.constants.items()]
        lines += ["", "[problem]", f"nu = {g(self.nu)}", f"tau = {g(self.tau)}", f"horizon = {g(self.horizon)}"]
        if self.A:
            lines += [f"n = {len(self.A) - 1}", "A = " + ", ".join(g(a) for a in self.A)]
        if self.terms:
            lines.append("terms = " + "; ".join(f"nu={g(o)}, lambda={g(lam)}" for lam, o in self.terms))
        if self.table:
            lines.append("table = " + ", ".join(g(t) for t in self.table))
        lines += ["", "[rhs]", f"f = {to_source(self.rhs)}", "", "[history]", f"phi = {to_source(self.history)}"]
        if self.constraints:
            lines += ["", "[constraints]"]
            lines += [f"point={g(p)}, order={o}, value={g(v)}" for p, o, v in self.constraints]
        if self.exact is not None:
            lines += ["", "[exact]", f"u = {to_source(self.exact)}"]
        return "\n".join(lines) + "\n"


# -- problem files -----------------------------------------------------------

_SECTION = re.compile(r"^\s*\[\s*([A-Za-z_]+)\s*\]\s*$")


def _split_lines(text: str) -> dict[str, list[_Entry]]:
    out: dict[str, list[_Entry]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        m = _SECTION.match(line)
        if m:
            current = m.group(1).lower()
            if current not in SECTIONS:
                raise ProblemFileError(f"unknown section [{m.group(1)}]", lineno, line.index("[") + 1)
            if current in out:
                raise ProblemFileError(f"section [{current}] appears twice", lineno, line.index("[") + 1)
            out[current] = []
            continue
        if current is None:
            raise ProblemFileError("content before the first section header", lineno, len(line) - len(line.lstrip()) + 1)
        if current == "constraints":
            start = len(line) - len(line.lstrip())
            out[current].append(_Entry("", line.strip(), lineno, start + 1))
            continue
        if "=" not in line:
            raise ProblemFileError("expected 'key = value'", lineno, len(line) - len(line.lstrip()) + 1)
        key, value = line.split("=", 1)
        col = len(key) + 2 + (len(value) - len(value.lstrip()))
        out[current].append(_Entry(key.strip(), value.strip(), lineno, col))
    return out


def _expr(entry: _Entry, constants: Mapping[str, float], src: str | None = None, column: int | None = None) -> Expr:
    src = entry.value if src is None else src
    column = entry.column if column is None else column
    try:
        return parse_expr(src, constants)
    except ParseError as exc:
        chars = len(src.encode("utf-8")[: exc.offset].decode("utf-8", errors="ignore"))
        raise ProblemExprError(str(exc), entry.line, column + chars) from exc


def _number(entry: _Entry, constants: Mapping[str, float], src: str | None = None, column: int | None = None) -> float:
    e = _expr(entry, constants, src, column)
    if free_variables(e):
        raise ProblemFileError(f"'{src or entry.value}' must not depend on {', '.join(sorted(free_variables(e)))}", entry.line, column or entry.column)
    try:
        return float(eval_expr(e))
    except ExprError as exc:
        raise ProblemExprError(str(exc), entry.line, column or entry.column) from exc


def _items(entry: _Entry, text: str, base: int, sep: str):
    """Split ``text`` on ``sep``, yielding (piece, column of the piece)."""
    pos = 0
    for piece in text.split(sep):
        lead = len(piece) - len(piece.lstrip())
        yield piece.strip(), base + pos + lead
        pos += len(piece) + len(sep)


def _keyed(entry: _Entry, text: str, base: int, wanted: tuple[str, ...]) -> dict[str, tuple[str, int]]:
    found = {}
    for piece, col in _items(entry, text, base, ","):
        if "=" not in piece:
            raise ProblemFileError(f"expected one of {', '.join(wanted)} as 'name=value'", entry.line, col)
        k, v = piece.split("=", 1)
        k = k.strip()
        if k not in wanted:
            raise ProblemFileError(f"unknown field {k!r} (expected {', '.join(wanted)})", entry.line, col)
        found[k] = (v.strip(), col + len(piece.split("=", 1)[0]) + 1 + (len(v) - len(v.lstrip())))
    missing = [k for k in wanted if k not in found]
    if missing:
        raise ProblemFileError(f"missing field(s) {', '.join(missing)}", entry.line, base)
    return found


def parse_problem(text: str, name: str = "", overrides: Mapping[str, float] | None = None) -> ProblemDef:
    """Parse a problem file; ``overrides`` replace constants or nu/tau/horizon."""
    overrides = dict(overrides or {})
    sections = _split_lines(text)
    for required in ("problem", "rhs", "history"):
        if required not in sections:
            raise ProblemFileError(f"missing section [{required}]", max(1, len(text.splitlines())))

    constants: dict[str, float] = {}
    for entry in sections.get("constants", []):
        if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", entry.key):
            raise ProblemFileError(f"invalid constant name {entry.key!r}", entry.line)
        if entry.key in ("t", "u", "ud", "pi", "nu", "tau", "horizon"):
            raise ProblemFileError(f"constant name {entry.key!r} is reserved", entry.line)
        value = overrides.pop(entry.key) if entry.key in overrides else _number(entry, constants)
        constants[entry.key] = float(value)

    entries = {}
    for entry in sections["problem"]:
        if entry.key not in _PROBLEM_KEYS:
            raise ProblemFileError(f"unknown key {entry.key!r} in [problem]", entry.line)
        entries[entry.key] = entry
    for key in ("nu", "tau", "horizon"):
        if key not in entries:
            raise ProblemFileError(f"[problem] needs '{key}'", sections["problem"][0].line if sections["problem"] else 1)

    scope = dict(constants)
    values = {}
    for key in ("nu", "tau", "horizon"):
        values[key] = float(overrides.pop(key)) if key in overrides else _number(entries[key], scope)
        scope[key] = values[key]
    if overrides:
        raise ConfigError(f"unknown override(s): {', '.join(sorted(overrides))}")

    A: tuple[float, ...] = ()
    if "A" in entries:
        e = entries["A"]
        A = tuple(_number(e, scope, piece, col) for piece, col in _items(e, e.value, e.column, ","))
    if "n" in entries:
        n = _number(entries["n"], scope)
        if n != int(n) or n < 0 or (A and int(n) != len(A) - 1):
            raise ProblemFileError(f"n = {n!r} does not match the {len(A)} A coefficient(s)", entries["n"].line, entries["n"].column)
    terms = []
    if "terms" in entries:
        e = entries["terms"]
        for piece, col in _items(e, e.value, e.column, ";"):
            fields = _keyed(e, piece, col, ("nu", "lambda"))
            order = _number(e, scope, *fields["nu"])
            lam = _number(e, scope, *fields["lambda"])
            terms.append((lam, order))
    table: tuple[float, ...] = ()
    if "table" in entries:
        e = entries["table"]
        table = tuple(_number(e, scope, piece, col) for piece, col in _items(e, e.value, e.column, ","))

    def single(section: str, key: str) -> _Entry:
        found = sections.get(section, [])
        if len(found) != 1 or found[0].key != key:
            line = found[0].line if found else 1
            raise ProblemFileError(f"[{section}] must contain exactly one '{key} = ...' line", line)
        return found[0]

    rhs_entry = single("rhs", "f")
    rhs = _expr(rhs_entry, scope)
    hist_entry = single("history", "phi")
    history = _expr(hist_entry, scope)
    if free_variables(history) - {"t"}:
        raise ProblemFileError("the history may depend on t only", hist_entry.line, hist_entry.column)
    exact = None
    if "exact" in sections:
        ex_entry = single("exact", "u")
        exact = _expr(ex_entry, scope)
        if free_variables(exact) - {"t"}:
            raise ProblemFileError("the exact solution may depend on t only", ex_entry.line, ex_entry.column)
    constraints = []
    for e in sections.get("constraints", []):
        fields = _keyed(e, e.value, e.column, ("point", "order", "value"))
        order = _number(e, scope, *fields["order"])
        if order != int(order) or order < 0:
            raise ProblemFileError("constraint order must be a non-negative integer", e.line, fields["order"][1])
        constraints.append((_number(e, scope, *fields["point"]), int(order), _number(e, scope, *fields["value"])))

    try:
        defn = ProblemDef(
            name=name,
            constants=constants,
            nu=values["nu"],
            tau=values["tau"],
            horizon=values["horizon"],
            rhs=rhs,
            history=history,
            A=A,
            terms=tuple(terms),
            constraints=tuple(constraints),
            exact=exact,
            table=table,
            source=text,
        )
        defn.to_problem()  # validates orders, tau and horizon
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return defn


def load_problem(path: str, overrides: Mapping[str, float] | None = None) -> ProblemDef:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_problem(text, name=path, overrides=overrides)


# -- builtins ----------------------------------------------------------------


class BuiltinId(enum.Enum):
    EX1_CASE_I = "Ex1CaseI"
    EX1_CASE_II = "Ex1CaseII"
    EX2_CASE_I = "Ex2CaseI"
    EX2_CASE_II = "Ex2CaseII"
    HOUSEFLIES = "Houseflies"
    LASER_NOISE = "LaserNoise"
    FRAC_BVP = "FracBVP"

    @classmethod
    def parse(cls, name: str | BuiltinId) -> BuiltinId:
        if isinstance(name, BuiltinId):
            return name
        for member in cls:
            if member.value.lower() == name.strip().lower():
                return member
        raise ConfigError(f"unknown builtin problem {name!r} (known: {', '.join(m.value for m in cls)})")


SERIES_CUTOFF = 1e-18

_TIMES = "0, tau/4, 3*tau/4, 5*tau/4, 7*tau/4, 2*tau"

# exact solutions shared by Examples 1 and 2: zero history, then a power or a
# power times a sine; the "lagged" copy is the same function shifted by tau
_POLY = "t^10"
_POLY_LAG = "piecewise(tau, 0, (t - tau)^10)"
_POLY_CAPUTO = "gamma(11)/gamma(11 - nu)*t^(10 - nu)"
_OSC = "t^(13/2)*sin(pi*t^(4/3))"
_OSC_LAG = "piecewise(tau, 0, (t - tau)^(13/2)*sin(pi*(t - tau)^(4/3)))"


def _oscillatory_caputo_terms(nu: float) -> list[str]:
    """Caputo derivative of t^(13/2) sin(pi t^(4/3)) as the sine series, truncated.

    Term j is g_j Gamma(b_j)/Gamma(b_j - nu) t^(x_j - nu) with
    g_j = (-1)^j pi^(2j+1)/(2j+1)!, b_j = (53+16j)/6, x_j = b_j - 1; terms stop once
    their magnitude at t = 1 falls below SERIES_CUTOFF.
    """
    out = []
    for j in range(200):
        b = (53 + 16 * j) / 6
        mag = math.pi ** (2 * j + 1) / math.factorial(2 * j + 1) * float(gamma_fn(b) / gamma_fn(b - nu))
        if mag < SERIES_CUTOFF:
            break
        sign = "-" if j % 2 else ""
        out.append(
            f"{sign}pi^{2 * j + 1}/{math.factorial(2 * j + 1)}*gamma({53 + 16 * j}/6)/gamma({53 + 16 * j}/6 - nu)"
            f"*t^({47 + 16 * j}/6 - nu)"
        )
    return out


def _ex12_text(case_i: bool, example2: bool) -> str:
    u, lag = (_POLY, _POLY_LAG) if case_i else (_OSC, _OSC_LAG)
    caputo = _POLY_CAPUTO if case_i else "SERIES"
    coef = ("t^2 - t^3" if case_i else "sin(pi*t)") if example2 else None
    if example2:
        # D^nu u = h - a(t) u - a(t) u(t - tau), h manufactured from the exact solution
        rhs = f"{caputo} + ({coef})*({u} + {lag}) - ({coef})*(u + ud)"
        problem = "nu = 0.1\ntau = 0.5\nhorizon = 1"
    else:
        # D^nu u + u = h - u(t - tau)
        rhs = f"{caputo} + {u} + {lag} - ud"
        problem = "nu = 0.1\ntau = 0.5\nhorizon = 1\nA = 1"
    return f"""[problem]
{problem}
table = 0, 0.25, 0.5, 0.75, 1
[rhs]
f = {rhs}
[history]
phi = 0
[exact]
u = {u}
"""


_HOUSEFLIES = f"""[constants]
c = 1.81
k = 0.5107
d = 0.147
z = 0.000226
[problem]
nu = 1
tau = 3
horizon = 2*tau
A = d
table = {_TIMES}
[rhs]
f = c*ud*(k - c*z*ud)
[history]
phi = 160
"""

_LASER = f"""[constants]
eps = 0.1
[problem]
nu = 1
tau = 1
horizon = 2*tau
A = 1/eps
table = {_TIMES}
[rhs]
f = u*ud/eps
[history]
phi = 0.9
"""

_BVP = """[constants]
delta = 0.3
mu = 1
q = 0.4
gamma_ = 0.2
nu1 = 1
[problem]
nu = 2
tau = 5
horizon = 1
A = 1
terms = nu=nu1, lambda=delta
table = 0, 0.25, 0.75, 1
[rhs]
f = mu*q^2/u^3*(u - gamma_*ud)
[history]
phi = 1
[constraints]
point=1, order=0, value=3
"""

_PRINTED = {
    BuiltinId.HOUSEFLIES: {"c": 1.81, "k": 0.5107, "d": 0.147, "z": 0.000226},
    BuiltinId.LASER_NOISE: {"eps": 0.1},
    BuiltinId.FRAC_BVP: {"delta": 0.3, "mu": 1.0, "q": 0.4, "gamma_": 0.2, "nu1": 1.0},
}


def builtin_text(ident: BuiltinId | str, nu: float | None = None) -> str:
    ident = BuiltinId.parse(ident)
    if ident is BuiltinId.HOUSEFLIES:
        return _HOUSEFLIES
    if ident is BuiltinId.LASER_NOISE:
        return _LASER
    if ident is BuiltinId.FRAC_BVP:
        return _BVP
    case_i = ident in (BuiltinId.EX1_CASE_I, BuiltinId.EX2_CASE_I)
    example2 = ident in (BuiltinId.EX2_CASE_I, BuiltinId.EX2_CASE_II)
    text = _ex12_text(case_i, example2)
    if not case_i:
        series = " + ".join(_oscillatory_caputo_terms(0.1 if nu is None else nu)).replace("+ -", "- ")
        text = text.replace("SERIES", f"({series})")
    return text


def builtin(ident: BuiltinId | str, overrides: Mapping[str, float] | None = None) -> ProblemDef:
    """Benchmark problem with its printed parameters; ``overrides`` may change
    those parameters (by constant name) and nu, tau or horizon."""
    ident = BuiltinId.parse(ident)
    overrides = dict(overrides or {})
    allowed = set(_PRINTED.get(ident, {})) | {"nu", "tau", "horizon"}
    unknown = set(overrides) - allowed
    if unknown:
        raise ConfigError(f"{ident.value} has no parameter(s) {', '.join(sorted(unknown))}")
    text = builtin_text(ident, overrides.get("nu"))
    defn = parse_problem(text, name=ident.value, overrides=overrides)
    return replace(defn, source=text)


def list_builtins() -> list[tuple[str, str]]:
    blurbs = {
        BuiltinId.EX1_CASE_I: "D^nu u + u = h - u(t-tau), exact t^10",
        BuiltinId.EX1_CASE_II: "D^nu u + u = h - u(t-tau), exact t^(13/2) sin(pi t^(4/3))",
        BuiltinId.EX2_CASE_I: "D^nu u = h - a(t)(u + u(t-tau)), a = t^2 - t^3, exact t^10",
        BuiltinId.EX2_CASE_II: "D^nu u = h - a(t)(u + u(t-tau)), a = sin(pi t), exact t^(13/2) sin(pi t^(4/3))",
        BuiltinId.HOUSEFLIES: "houseflies model, history 160",
        BuiltinId.LASER_NOISE: "noise on light, eps = 0.1, history 0.9",
        BuiltinId.FRAC_BVP: "D^nu u + delta D^nu1 u = -u + mu q^2/u^3 (u - gamma u(t-tau)), u(1) = 3",
    }
    return [(i.value, blurbs[i]) for i in BuiltinId]


def resolve(source: str, overrides: Mapping[str, float] | None = None) -> ProblemDef:
    """A builtin id or a path to a problem file."""
    try:
        ident = BuiltinId.parse(source)
    except ConfigError:
        try:
            return load_problem(source, overrides)
        except FileNotFoundError:
            raise ConfigError(f"{source!r} is neither a builtin problem nor a readable file") from None
    return builtin(ident, overrides)
