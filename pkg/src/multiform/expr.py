"""Small expression language for Hamiltonians and related scalar functions.

Expressions are immutable trees.  They can be parsed from text, printed back
to parseable text, evaluated on a binding of variable names to floats, and
differentiated exactly.  Differentiation applies constant folding only, so
trees stay bounded but are not simplified beyond that.

The grammar is documented in ``docs/expr-grammar.md``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

__all__ = [
    "Expression",
    "Const",
    "Var",
    "Neg",
    "Call",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "ExpressionError",
    "ExpressionSyntaxError",
    "UnboundVariableError",
    "EvaluationDomainError",
    "FUNCTIONS",
    "parse",
    "to_string",
    "evaluate",
    "differentiate",
    "free_variables",
    "substitute",
    "compile_expressions",
]


class ExpressionError(ValueError):
    pass


class ExpressionSyntaxError(ExpressionError):
    """Raised on malformed source text.

    ``offset`` is the byte offset of the offending token and ``expected`` the
    set of token kinds that would have been accepted there.
    """

    def __init__(self, message: str, source: str, offset: int, expected: Iterable[str] = ()):
        self.source = source
        self.offset = offset
        self.expected = frozenset(expected)
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(detail)


class UnboundVariableError(ExpressionError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unbound variable {name!r}")


class EvaluationDomainError(ExpressionError):
    """Raised when a subexpression leaves the real domain (log(0), x/0, ...)."""

    def __init__(self, message: str, subexpression: "Expression"):
        self.subexpression = subexpression
        super().__init__(f"{message} in {to_string(subexpression)!r}")


# ---------------------------------------------------------------------------
# tree


class Expression:
    """Base class of all expression nodes.

    Arithmetic operators build trees with constant folding, so
    ``Var("p1") * 2 + 1`` is a valid way to construct an expression.
    """

    __slots__ = ()
    precedence = 5

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __pow__(self, other):
        return power(self, _lift(other))

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True, eq=True, repr=False)
class Const(Expression):
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ExpressionError(f"non-finite constant {self.value!r}")
        object.__setattr__(self, "value", float(self.value))

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Var(Expression):
    name: str

    def __repr__(self):
        return f"Var({self.name!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Neg(Expression):
    arg: Expression
    precedence = 3

    def __repr__(self):
        return f"Neg({self.arg!r})"


FUNCTIONS: dict[str, Callable[[float], float]] = {
    "exp": math.exp,
    "log": math.log,
    "sin": math.sin,
    "cos": math.cos,
    "sqrt": math.sqrt,
}


@dataclass(frozen=True, eq=True, repr=False)
class Call(Expression):
    func: str
    arg: Expression

    def __post_init__(self):
        if self.func not in FUNCTIONS:
            raise ExpressionError(f"unknown function {self.func!r}")

    def __repr__(self):
        return f"Call({self.func!r}, {self.arg!r})"


@dataclass(frozen=True, eq=True, repr=False)
class _Binary(Expression):
    left: Expression
    right: Expression
    symbol = "?"

    def __post_init__(self):
        pass

    def __repr__(self):
        return f"{type(self).__name__}({self.left!r}, {self.right!r})"


class Add(_Binary):
    symbol = "+"
    precedence = 1


class Sub(_Binary):
    symbol = "-"
    precedence = 1


class Mul(_Binary):
    symbol = "*"
    precedence = 2


class Div(_Binary):
    symbol = "/"
    precedence = 2


class Pow(_Binary):
    """``left ^ right``; the exponent must not contain variables."""

    symbol = "^"
    precedence = 4

    def __post_init__(self):
        if free_variables(self.right):
            raise ExpressionError(
                f"exponent must be constant, got {to_string(self.right)!r}"
            )


_BINARY = {"+": Add, "-": Sub, "*": Mul, "/": Div, "^": Pow}


def _lift(value) -> Expression:
    if isinstance(value, Expression):
        return value
    if isinstance(value, (int, float)):
        return Const(float(value))
    raise TypeError(f"cannot use {type(value).__name__} in an expression")


# ---------------------------------------------------------------------------
# folding constructors


def _is(e: Expression, value: float) -> bool:
    return isinstance(e, Const) and e.value == value


def neg(a: Expression) -> Expression:
    if isinstance(a, Const):
        return Const(-a.value)
    return Neg(a)


def add(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return Add(a, b)


def sub(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if isinstance(b, Const):
        a, b = b, a
    if isinstance(a, Const):
        if a.value == 0.0:
            return Const(0.0)
        if a.value == 1.0:
            return b
        if a.value == -1.0:
            return neg(b)
        # coefficient folding: c1 * (c2 * x) -> (c1 c2) * x
        if isinstance(b, Mul) and isinstance(b.left, Const):
            return mul(Const(a.value * b.left.value), b.right)
    return Mul(a, b)


def div(a: Expression, b: Expression) -> Expression:
    if isinstance(b, Const):
        if b.value == 0.0:
            return Div(a, b)
        if isinstance(a, Const):
            return Const(a.value / b.value)
        if b.value == 1.0:
            return a
        if isinstance(a, Mul) and isinstance(a.left, Const):
            return mul(Const(a.left.value / b.value), a.right)
    if _is(a, 0.0):
        return Const(0.0)
    return Div(a, b)


def power(a: Expression, b: Expression) -> Expression:
    if isinstance(b, Const):
        if b.value == 0.0:
            return Const(1.0)
        if b.value == 1.0:
            return a
        if isinstance(a, Const):
            try:
                return Const(_real_pow(a.value, b.value))
            except (ValueError, ZeroDivisionError, OverflowError):
                pass
    return Pow(a, b)


def call(func: str, a: Expression) -> Expression:
    return Call(func, a)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # number, name, op, end
    text: str
    offset: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while True:
        while pos < len(source) and source[pos].isspace():
            pos += 1
        if pos >= len(source):
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            raise ExpressionSyntaxError(
                f"unexpected character {source[pos]!r}", source, _byte_offset(source, pos),
                {"number", "name", "(", "-"},
            )
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append(_Token(kind, m.group(kind), start))
        pos = m.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


def _byte_offset(source: str, index: int) -> int:
    return len(source[:index].encode("utf-8"))


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def error(self, message: str, expected: Iterable[str]):
        raise ExpressionSyntaxError(
            message, self.source, _byte_offset(self.source, self.tok.offset), expected
        )

    def accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def parse(self) -> Expression:
        e = self.expr()
        if self.tok.kind != "end":
            self.error(f"unexpected token {self.tok.text!r}", {"+", "-", "*", "/", "^", "end of input"})
        return e

    def expr(self) -> Expression:
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            e = _BINARY[op](e, self.term())
        return e

    def term(self) -> Expression:
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            e = _BINARY[op](e, self.unary())
        return e

    def unary(self) -> Expression:
        if self.accept("+"):
            return self.unary()
        if self.tok.kind == "op" and self.tok.text == "-":
            nxt, after = self.tokens[self.i + 1], self.tokens[self.i + 2] if self.i + 2 < len(self.tokens) else None
            # "-2" is a literal, but "-2^2" is -(2^2)
            if nxt.kind == "number" and not (after and after.kind == "op" and after.text == "^"):
                self.i += 2
                return Const(-float(nxt.text))
            self.i += 1
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            start = self.tok.offset
            self.i += 1
            exponent = self.unary()
            if free_variables(exponent):
                raise ExpressionSyntaxError(
                    "exponent must be constant", self.source,
                    _byte_offset(self.source, start), {"number"},
                )
            return Pow(base, exponent)
        return base

    def atom(self) -> Expression:
        tok = self.tok
        if tok.kind == "number":
            self.i += 1
            return Const(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            if self.tok.kind == "op" and self.tok.text == "(":
                if tok.text not in FUNCTIONS:
                    raise ExpressionSyntaxError(
                        f"unknown function {tok.text!r}", self.source,
                        _byte_offset(self.source, tok.offset), FUNCTIONS,
                    )
                self.i += 1
                arg = self.expr()
                if not self.accept(")"):
                    self.error("missing ')'", {")"})
                return Call(tok.text, arg)
            return Var(tok.text)
        if self.accept("("):
            e = self.expr()
            if not self.accept(")"):
                self.error("missing ')'", {")"})
            return e
        self.error(
            "unexpected end of input" if tok.kind == "end" else f"unexpected token {tok.text!r}",
            {"number", "name", "(", "-"},
        )


def parse(source: str) -> Expression:
    """Parse ``source`` into an expression tree (no folding)."""
    return _Parser(source).parse()


# ---------------------------------------------------------------------------
# printing


def _format_number(x: float) -> str:
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _prec(e: Expression) -> int:
    if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return 3
    return e.precedence


def to_string(e: Expression) -> str:
    """Render ``e`` as text that :func:`parse` maps back to the same tree."""
    if isinstance(e, Const):
        if e.value == 0.0 and math.copysign(1.0, e.value) < 0:
            return "-0"
        return _format_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_string(e.arg)})"
    if isinstance(e, Neg):
        if isinstance(e.arg, Const):
            # keep Neg(Const) distinct from a negative literal
            return f"-({to_string(e.arg)})"
        return "-" + _wrap(e.arg, _prec(e.arg) < 3)
    if isinstance(e, Pow):
        return f"{_wrap(e.left, _prec(e.left) < 5)}^{_wrap(e.right, _prec(e.right) < 3)}"
    if isinstance(e, _Binary):
        p = e.precedence
        return (
            f"{_wrap(e.left, _prec(e.left) < p)} {e.symbol} "
            f"{_wrap(e.right, _prec(e.right) <= p)}"
        )
    raise TypeError(f"not an expression: {e!r}")


def _wrap(e: Expression, paren: bool) -> str:
    s = to_string(e)
    return f"({s})" if paren else s


# ---------------------------------------------------------------------------
# evaluation


def _real_pow(base: float, exponent: float) -> float:
    if base < 0 and exponent != int(exponent):
        raise ValueError("negative base with non-integer exponent")
    return base ** exponent


def evaluate(e: Expression, binding: Mapping[str, float]) -> float:
    """Evaluate ``e`` in IEEE double precision.

    Raises :class:`UnboundVariableError` for a missing variable and
    :class:`EvaluationDomainError` naming the offending subexpression when
    an operation has no real value.
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(binding[e.name])
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, binding)
    if isinstance(e, Call):
        x = evaluate(e.arg, binding)
        try:
            return FUNCTIONS[e.func](x)
        except (ValueError, OverflowError) as exc:
            raise EvaluationDomainError(f"{e.func} of {x!r}: {exc}", e) from None
    a = evaluate(e.left, binding)
    b = evaluate(e.right, binding)
    if isinstance(e, Add):
        return a + b
    if isinstance(e, Sub):
        return a - b
    if isinstance(e, Mul):
        return a * b
    try:
        if isinstance(e, Div):
            return a / b
        return _real_pow(a, b)
    except (ZeroDivisionError, ValueError, OverflowError) as exc:
        raise EvaluationDomainError(str(exc), e) from None


def free_variables(e: Expression) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, (Neg, Call)):
        return free_variables(e.arg)
    return free_variables(e.left) | free_variables(e.right)


def substitute(e: Expression, values: Mapping[str, float | Expression]) -> Expression:
    """Replace variables by constants or expressions, folding as it goes."""
    if isinstance(e, Var):
        if e.name in values:
            return _lift(values[e.name])
        return e
    if isinstance(e, Const):
        return e
    if isinstance(e, Neg):
        return neg(substitute(e.arg, values))
    if isinstance(e, Call):
        return call(e.func, substitute(e.arg, values))
    left, right = substitute(e.left, values), substitute(e.right, values)
    return {Add: add, Sub: sub, Mul: mul, Div: div, Pow: power}[type(e)](left, right)


# ---------------------------------------------------------------------------
# differentiation


@lru_cache(maxsize=4096)
def differentiate(e: Expression, var: str) -> Expression:
    """Exact partial derivative of ``e`` with respect to ``var``."""
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.name == var else 0.0)
    if var not in free_variables(e):
        return Const(0.0)
    if isinstance(e, Neg):
        return neg(differentiate(e.arg, var))
    if isinstance(e, Call):
        u = e.arg
        du = differentiate(u, var)
        if e.func == "exp":
            outer = e
        elif e.func == "log":
            return div(du, u)
        elif e.func == "sin":
            outer = call("cos", u)
        elif e.func == "cos":
            outer = neg(call("sin", u))
        else:  # sqrt
            return div(du, mul(Const(2.0), e))
        return mul(outer, du)
    u, v = e.left, e.right
    du = differentiate(u, var)
    if isinstance(e, Add):
        return add(du, differentiate(v, var))
    if isinstance(e, Sub):
        return sub(du, differentiate(v, var))
    if isinstance(e, Mul):
        return add(mul(du, v), mul(u, differentiate(v, var)))
    if isinstance(e, Div):
        dv = differentiate(v, var)
        if _is(dv, 0.0):
            return div(du, v)
        return sub(div(du, v), div(mul(u, dv), power(v, Const(2.0))))
    # Pow with constant exponent
    c = evaluate(v, {})
    return mul(mul(Const(c), power(u, Const(c - 1.0))), du)


# ---------------------------------------------------------------------------
# compilation


def _emit(e: Expression, names: Mapping[str, str]) -> str:
    # mirrors evaluate() operation by operation so results are bit-identical
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return names[e.name]
    if isinstance(e, Neg):
        return f"(-{_emit(e.arg, names)})"
    if isinstance(e, Call):
        return f"_f_{e.func}({_emit(e.arg, names)})"
    if isinstance(e, Pow):
        c = evaluate(e.right, {})
        if c == int(c):
            return f"({_emit(e.left, names)} ** {c!r})"
        return f"_pow({_emit(e.left, names)}, {c!r})"
    return f"({_emit(e.left, names)} {e.symbol} {_emit(e.right, names)})"


def compile_expressions(
    exprs: Sequence[Expression], variables: Sequence[str]
) -> Callable[..., tuple[float, ...]]:
    """Compile several expressions into one fast positional function.

    The returned function takes one float per name in ``variables`` and
    returns a tuple of values.  On any arithmetic failure it re-evaluates with
    :func:`evaluate` so the error names the offending subexpression.
    """
    variables = list(variables)
    unknown = set().union(*(free_variables(e) for e in exprs)) - set(variables) if exprs else set()
    if unknown:
        raise UnboundVariableError(sorted(unknown)[0])
    names = {name: f"a{i}" for i, name in enumerate(variables)}
    args = ", ".join(names.values())
    body = ", ".join(_emit(e, names) for e in exprs)
    src = f"def _fast({args}):\n    return ({body}{',' if exprs else ''})\n"
    namespace = {f"_f_{k}": f for k, f in FUNCTIONS.items()}
    namespace["_pow"] = _real_pow
    exec(compile(src, "<multiform.expr>", "exec"), namespace)
    fast = namespace["_fast"]
    exprs = tuple(exprs)

    def run(*values: float) -> tuple[float, ...]:
        try:
            return fast(*values)
        except (ArithmeticError, ValueError):
            b = dict(zip(variables, values))
            for e in exprs:
                evaluate(e, b)
            raise

    return run
