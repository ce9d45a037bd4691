"""Expression trees for planar vector fields: parsing, evaluation, differentiation.

Grammar (standard precedence; ``^`` is right-associative and binds tighter
than unary minus, so ``-x^2`` means ``-(x^2)``)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | power
    power := atom ('^' unary)?
    atom  := NUMBER | IDENT '(' expr ')' | IDENT | '(' expr ')'

Recognized functions: sin, cos, tan, exp, log, sqrt, abs.  The printer and
evaluator additionally understand ``sign``, which differentiating ``abs``
produces.  Identifiers other than the declared variables are rejected at
parse time, so no free names survive into an AST.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np

from .errors import (
    ConfigError,
    DomainError,
    LexicalError,
    ParseError,
    UnknownFunctionError,
    UnknownVariableError,
)

__all__ = [
    "Const",
    "Var",
    "Neg",
    "Bin",
    "Call",
    "ExprAst",
    "Token",
    "tokenize",
    "parse",
    "evaluate",
    "differentiate",
    "to_source",
    "compile_fn",
    "PlanarField",
    "parse_field_text",
]


# --- AST -------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "ExprAst"


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * / ^
    left: "ExprAst"
    right: "ExprAst"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "ExprAst"


ExprAst = Union[Const, Var, Neg, Bin, Call]

_PARSE_FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "sign")


def _sign(v: float) -> float:
    return float((v > 0.0) - (v < 0.0))


_FUNC_IMPL = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "abs": math.fabs,
    "sign": _sign,
}


# --- tokenizer -------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | op | lparen | rparen | comma
    text: str
    offset: int  # byte offset into the UTF-8 source


_NUMBER_RE = re.compile(r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")


def _byte_offset(source: str, index: int) -> int:
    return len(source[:index].encode("utf-8"))


def tokenize(source: str) -> list[Token]:
    """Split source into number/identifier/operator tokens, skipping whitespace."""
    tokens = []
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch.isspace():
            i += 1
            continue
        off = _byte_offset(source, i)
        if ch.isdigit() or ch == ".":
            m = _NUMBER_RE.match(source, i)
            if m is None:
                raise LexicalError(f"malformed number starting with {ch!r}", off)
            tokens.append(Token("num", m.group(), off))
            i = m.end()
        elif ch.isalpha() or ch == "_":
            m = _IDENT_RE.match(source, i)
            tokens.append(Token("ident", m.group(), off))
            i = m.end()
        elif ch in "+-*/^":
            tokens.append(Token("op", ch, off))
            i += 1
        elif ch == "(":
            tokens.append(Token("lparen", ch, off))
            i += 1
        elif ch == ")":
            tokens.append(Token("rparen", ch, off))
            i += 1
        elif ch == ",":
            tokens.append(Token("comma", ch, off))
            i += 1
        else:
            raise LexicalError(f"unexpected character {ch!r}", off)
    return tokens


# --- parser ----------------------------------------------------------------

class _Parser:
    def __init__(self, source: str, variables: tuple[str, ...]):
        self.source = source
        self.tokens = tokenize(source)
        self.pos = 0
        self.variables = variables

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def advance(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", len(self.source.encode("utf-8")))
        self.pos += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.advance()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            raise ParseError(f"expected {want!r}, found {tok.text!r}", tok.offset)
        return tok

    def parse(self) -> ExprAst:
        node = self.expr()
        tok = self.peek()
        if tok is not None:
            raise ParseError(f"unexpected token {tok.text!r}", tok.offset)
        return node

    def expr(self) -> ExprAst:
        node = self.term()
        while (tok := self.peek()) is not None and tok.kind == "op" and tok.text in "+-":
            self.advance()
            node = Bin(tok.text, node, self.term())
        return node

    def term(self) -> ExprAst:
        node = self.unary()
        while (tok := self.peek()) is not None and tok.kind == "op" and tok.text in "*/":
            self.advance()
            node = Bin(tok.text, node, self.unary())
        return node

    def unary(self) -> ExprAst:
        tok = self.peek()
        if tok is not None and tok.kind == "op" and tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> ExprAst:
        node = self.atom()
        tok = self.peek()
        if tok is not None and tok.kind == "op" and tok.text == "^":
            self.advance()
            node = Bin("^", node, self.unary())
        return node

    def atom(self) -> ExprAst:
        tok = self.advance()
        if tok.kind == "num":
            return Const(float(tok.text))
        if tok.kind == "lparen":
            node = self.expr()
            self.expect("rparen")
            return node
        if tok.kind == "ident":
            nxt = self.peek()
            if nxt is not None and nxt.kind == "lparen":
                if tok.text not in _PARSE_FUNCTIONS:
                    raise UnknownFunctionError(f"unknown function {tok.text!r}", tok.offset)
                self.advance()
                arg = self.expr()
                self.expect("rparen")
                return Call(tok.text, arg)
            if tok.text not in self.variables:
                raise UnknownVariableError(
                    f"unknown variable {tok.text!r} (allowed: {', '.join(self.variables)})",
                    tok.offset,
                )
            return Var(tok.text)
        raise ParseError(f"unexpected token {tok.text!r}", tok.offset)


def parse(source: str, variables: tuple[str, ...] = ("x", "y")) -> ExprAst:
    """Parse source text into an AST over the given variables."""
    return _Parser(source, variables).parse()


# --- printing --------------------------------------------------------------

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(e: ExprAst) -> int:
    if isinstance(e, Bin):
        return _PRECEDENCE[e.op]
    if isinstance(e, Neg):
        return 3
    return 5


def to_source(e: ExprAst) -> str:
    """Render an AST back to parseable text; reparsing yields an identical tree."""
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({to_source(e.arg)})"
    if isinstance(e, Neg):
        inner = to_source(e.arg)
        if _prec(e.arg) < 3:
            inner = f"({inner})"
        return f"-{inner}"
    assert isinstance(e, Bin)
    p = _PRECEDENCE[e.op]
    left = to_source(e.left)
    right = to_source(e.right)
    if e.op == "^":
        # right-associative: parenthesize the left operand unless it is atomic
        if _prec(e.left) <= p:
            left = f"({left})"
        if _prec(e.right) < p:
            right = f"({right})"
    else:
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
    return f"{left} {e.op} {right}" if e.op in "+-" else f"{left}{e.op}{right}"


# --- compilation and evaluation ---------------------------------------------

def _emit(e: ExprAst) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{_emit(e.arg)})"
    if isinstance(e, Call):
        return f"_fn_{e.fn}({_emit(e.arg)})"
    assert isinstance(e, Bin)
    if e.op == "^":
        return f"_fn_pow({_emit(e.left)}, {_emit(e.right)})"
    return f"({_emit(e.left)} {e.op} {_emit(e.right)})"


@lru_cache(maxsize=None)
def compile_fn(e: ExprAst, variables: tuple[str, ...] = ("x", "y")) -> Callable[..., float]:
    """Compile an AST into a plain positional-argument float function.

    The emitted code performs exactly the arithmetic of the tree (same
    operations in the same order), so results are bit-identical across
    calls.  Domain failures surface as ValueError / ZeroDivisionError /
    OverflowError, which :func:`evaluate` maps to DomainError.
    """
    ns = {f"_fn_{name}": impl for name, impl in _FUNC_IMPL.items()}
    ns["_fn_pow"] = math.pow
    src = f"def _compiled({', '.join(variables)}):\n    return {_emit(e)}\n"
    exec(compile(src, "<field-expr>", "exec"), ns)
    return ns["_compiled"]


def evaluate(e: ExprAst, x: float, y: float) -> float:
    """Evaluate at (x, y) in IEEE double; non-finite results raise DomainError."""
    fn = compile_fn(e, ("x", "y"))
    try:
        v = fn(float(x), float(y))
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise DomainError(f"evaluation failed at ({x}, {y}): {exc}") from exc
    if not math.isfinite(v):
        raise DomainError(f"non-finite result {v} at ({x}, {y})")
    return v


# --- differentiation --------------------------------------------------------

def _is_const(e: ExprAst, v: float | None = None) -> bool:
    return isinstance(e, Const) and (v is None or e.value == v)


def _add(a: ExprAst, b: ExprAst) -> ExprAst:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Bin("+", a, b)


def _sub(a: ExprAst, b: ExprAst) -> ExprAst:
    if _is_const(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is_const(a, 0.0):
        return Neg(b)
    return Bin("-", a, b)


def _mul(a: ExprAst, b: ExprAst) -> ExprAst:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Bin("*", a, b)


def _div(a: ExprAst, b: ExprAst) -> ExprAst:
    if _is_const(a, 0.0):
        return Const(0.0)
    if _is_const(b, 1.0):
        return a
    return Bin("/", a, b)


def _pow(a: ExprAst, b: ExprAst) -> ExprAst:
    if _is_const(b, 1.0):
        return a
    if _is_const(b, 0.0):
        return Const(1.0)
    return Bin("^", a, b)


def differentiate(e: ExprAst, var: str) -> ExprAst:
    """Symbolic partial derivative with respect to ``var``.

    Only literal constant arithmetic is folded; the result is compared
    pointwise against finite differences in the test suite rather than
    simplified.  ``abs`` differentiates to ``sign`` with sign(0) = 0.
    """
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.name == var else 0.0)
    if isinstance(e, Neg):
        d = differentiate(e.arg, var)
        return Const(-d.value) if isinstance(d, Const) else Neg(d)
    if isinstance(e, Bin):
        u, v = e.left, e.right
        du, dv = differentiate(u, var), differentiate(v, var)
        if e.op == "+":
            return _add(du, dv)
        if e.op == "-":
            return _sub(du, dv)
        if e.op == "*":
            return _add(_mul(du, v), _mul(u, dv))
        if e.op == "/":
            return _div(_sub(_mul(du, v), _mul(u, dv)), _pow(v, Const(2.0)))
        # power: use the plain rule for constant exponents so polynomial
        # derivatives never introduce log(u)
        if isinstance(v, Const):
            return _mul(_mul(v, _pow(u, Const(v.value - 1.0))), du)
        logterm = _add(_mul(dv, Call("log", u)), _div(_mul(v, du), u))
        return _mul(_pow(u, v), logterm)
    assert isinstance(e, Call)
    u = e.arg
    du = differentiate(u, var)
    if e.fn == "sin":
        outer: ExprAst = Call("cos", u)
    elif e.fn == "cos":
        outer = Neg(Call("sin", u))
    elif e.fn == "tan":
        outer = _div(Const(1.0), _pow(Call("cos", u), Const(2.0)))
    elif e.fn == "exp":
        outer = Call("exp", u)
    elif e.fn == "log":
        outer = _div(Const(1.0), u)
    elif e.fn == "sqrt":
        outer = _div(Const(1.0), _mul(Const(2.0), Call("sqrt", u)))
    elif e.fn == "abs":
        outer = Call("sign", u)
    elif e.fn == "sign":
        return Const(0.0)
    else:  # pragma: no cover - parser rejects unknown functions
        raise UnknownFunctionError(f"cannot differentiate {e.fn!r}")
    return _mul(outer, du)


# --- planar fields -----------------------------------------------------------

_DEFAULT_DOMAIN = (-100.0, 100.0, -100.0, 100.0)


class PlanarField:
    """An autonomous planar vector field (P(x,y), Q(x,y)) with exact partials.

    Immutable after construction; evaluation is reentrant.  ``domain`` is the
    working box (xmin, xmax, ymin, ymax) that integration must stay inside.
    ``hamiltonian`` is an optional first integral used for cycle caching and
    energy-invariance checks of the built-in examples.
    """

    def __init__(
        self,
        p: ExprAst,
        q: ExprAst,
        *,
        name: str = "field",
        domain: tuple[float, float, float, float] = _DEFAULT_DOMAIN,
        hamiltonian: ExprAst | None = None,
    ):
        self.name = name
        self.p = p
        self.q = q
        self.domain = tuple(float(v) for v in domain)
        if not (self.domain[0] < self.domain[1] and self.domain[2] < self.domain[3]):
            raise ConfigError(f"degenerate domain box {self.domain}")
        self.hamiltonian = hamiltonian
        self.dp_dx = differentiate(p, "x")
        self.dp_dy = differentiate(p, "y")
        self.dq_dx = differentiate(q, "x")
        self.dq_dy = differentiate(q, "y")
        self._pf = compile_fn(p)
        self._qf = compile_fn(q)
        self._partials = tuple(
            compile_fn(d) for d in (self.dp_dx, self.dp_dy, self.dq_dx, self.dq_dy)
        )
        self._hf = compile_fn(hamiltonian) if hamiltonian is not None else None

    @classmethod
    def from_strings(
        cls,
        p: str,
        q: str,
        *,
        name: str = "field",
        domain: tuple[float, float, float, float] = _DEFAULT_DOMAIN,
        hamiltonian: str | None = None,
    ) -> "PlanarField":
        h = parse(hamiltonian) if hamiltonian is not None else None
        return cls(parse(p), parse(q), name=name, domain=domain, hamiltonian=h)

    def __repr__(self):
        return f"PlanarField({self.name!r}: P={to_source(self.p)}, Q={to_source(self.q)})"

    def rhs(self, y: np.ndarray) -> np.ndarray:
        """Right-hand side V(z) for the integrator."""
        px = self._pf(y[0], y[1])
        qy = self._qf(y[0], y[1])
        if not (math.isfinite(px) and math.isfinite(qy)):
            raise DomainError(f"non-finite field value at ({y[0]}, {y[1]})")
        return np.array((px, qy))

    def velocity(self, z) -> np.ndarray:
        return self.rhs(np.asarray(z, dtype=float))

    def jacobian_exact(self, z) -> np.ndarray:
        x, y = float(z[0]), float(z[1])
        px, py, qx, qy = (f(x, y) for f in self._partials)
        return np.array(((px, py), (qx, qy)))

    def energy(self, z) -> float | None:
        if self._hf is None:
            return None
        return self._hf(float(z[0]), float(z[1]))

    def contains(self, z) -> bool:
        xmin, xmax, ymin, ymax = self.domain
        return xmin <= z[0] <= xmax and ymin <= z[1] <= ymax


def parse_field_text(text: str, name: str = "field") -> PlanarField:
    """Parse the field definition format: ``P = <expr>``, ``Q = <expr>``,
    optional ``domain = [xmin, xmax, ymin, ymax]``, one entry per line.
    ``#`` starts a comment."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value
    unknown = set(entries) - {"P", "Q", "domain"}
    if unknown:
        raise ConfigError(f"unknown field keys: {sorted(unknown)}")
    for required in ("P", "Q"):
        if required not in entries:
            raise ConfigError(f"missing required key {required!r}")
    domain = _DEFAULT_DOMAIN
    if "domain" in entries:
        domain = _parse_box(entries["domain"])
    return PlanarField.from_strings(entries["P"], entries["Q"], name=name, domain=domain)


def _parse_box(text: str) -> tuple[float, float, float, float]:
    body = text.strip()
    if not (body.startswith("[") and body.endswith("]")):
        raise ConfigError(f"expected '[xmin, xmax, ymin, ymax]', got {text!r}")
    parts = [p.strip() for p in body[1:-1].split(",")]
    if len(parts) != 4:
        raise ConfigError(f"domain needs 4 numbers, got {len(parts)}")
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad domain entry: {exc}") from exc
    return vals
