"""Tiny expression language for test functions f(x).

Grammar (one variable x):

    expr     := term (('+' | '-') term)*
    term     := factor (('*' | '/') factor)*
    factor   := '-' factor | power
    power    := atom ['^' exponent]
    atom     := NUMBER | 'x' | 'pi' | 'e' | fn '(' expr ')' | '(' expr ')'
    fn       := 'exp' | 'log' | 'sin' | 'cos'
    exponent := NUMBER | '(' ['-'] NUMBER ['/' NUMBER] ')'

Exponents are constant rationals so differentiation stays closed-form; a bare
negative exponent must be parenthesized (``x^(-1)``, not ``x^-1``).  Function
arguments need parentheses: ``sin x`` is a syntax error.  Precedence is
``^`` > unary minus > ``*``/``/`` > ``+``/``-``.

Evaluation dispatches on the type of x: mpf/mpc use mpmath at the ambient
precision, float/complex use the C math library, Fraction/int evaluate
exactly (rational operations only).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

import mpmath
from mpmath import mpc, mpf

from .scalar import ExactnessLost, _fraction_root


class ExprSyntaxError(ValueError):
    """Parse failure with byte offset and the token set that was expected."""

    def __init__(self, message: str, pos: int, expected=()):
        self.pos = pos
        self.expected = tuple(expected)
        detail = f"{message} at offset {pos}"
        if expected:
            detail += " (expected " + " or ".join(sorted(self.expected)) + ")"
        super().__init__(detail)


class EvalDomainError(ArithmeticError):
    """Evaluation left the domain (log of non-positive real, division by zero).

    Carries the source offset of the offending sub-expression.
    """

    def __init__(self, message: str, pos: int):
        self.pos = pos
        super().__init__(f"{message} at offset {pos}")


# --------------------------------------------------------------------------- AST


@dataclass(frozen=True)
class Node:
    pass


@dataclass(frozen=True)
class Num(Node):
    value: Fraction
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Var(Node):
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Const(Node):
    name: str  # "pi" | "e"
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class BinOp(Node):
    op: str  # '+', '-', '*', '/'
    left: Node
    right: Node
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Neg(Node):
    arg: Node
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class PowNode(Node):
    base: Node
    exponent: Fraction
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Call(Node):
    fn: str  # exp | log | sin | cos
    arg: Node
    pos: int = field(default=-1, compare=False)


_FUNCTIONS = ("exp", "log", "sin", "cos")
_CONSTANTS = ("pi", "e")


# ----------------------------------------------------------------------- parsing


class _Lexer:
    def __init__(self, text: str):
        self.text = text
        self.i = 0

    def skip_ws(self):
        while self.i < len(self.text) and self.text[self.i].isspace():
            self.i += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.i] if self.i < len(self.text) else ""

    def number(self) -> tuple[Fraction, int]:
        start = self.i
        while self.i < len(self.text) and self.text[self.i].isdigit():
            self.i += 1
        if self.i < len(self.text) and self.text[self.i] == ".":
            self.i += 1
            if self.i >= len(self.text) or not self.text[self.i].isdigit():
                raise ExprSyntaxError("missing digits after decimal point", self.i, ("digit",))
            while self.i < len(self.text) and self.text[self.i].isdigit():
                self.i += 1
        return Fraction(self.text[start : self.i]), start

    def ident(self) -> tuple[str, int]:
        start = self.i
        while self.i < len(self.text) and (self.text[self.i].isalpha() or self.text[self.i] == "_"):
            self.i += 1
        return self.text[start : self.i], start


class _Parser:
    def __init__(self, text: str):
        self.lx = _Lexer(text)

    def parse(self) -> Node:
        node = self.expr()
        if self.lx.peek():
            raise ExprSyntaxError(
                f"unexpected {self.lx.peek()!r}", self.lx.i, ("operator", "end of input")
            )
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.lx.peek() in ("+", "-"):
            op = self.lx.peek()
            pos = self.lx.i
            self.lx.i += 1
            node = BinOp(op, node, self.term(), pos=pos)
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.lx.peek() in ("*", "/"):
            op = self.lx.peek()
            pos = self.lx.i
            self.lx.i += 1
            node = BinOp(op, node, self.factor(), pos=pos)
        return node

    def factor(self) -> Node:
        if self.lx.peek() == "-":
            pos = self.lx.i
            self.lx.i += 1
            return Neg(self.factor(), pos=pos)
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.lx.peek() == "^":
            pos = self.lx.i
            self.lx.i += 1
            exponent = self.exponent()
            return PowNode(base, exponent, pos=pos)
        return base

    def exponent(self) -> Fraction:
        ch = self.lx.peek()
        if ch == "-":
            raise ExprSyntaxError(
                "negative exponent must be parenthesized, e.g. x^(-1)",
                self.lx.i,
                ("number", "("),
            )
        if ch == "(":
            self.lx.i += 1
            sign = 1
            if self.lx.peek() == "-":
                sign = -1
                self.lx.i += 1
            if not self.lx.peek().isdigit():
                raise ExprSyntaxError("expected a rational exponent", self.lx.i, ("number",))
            num, _ = self.lx.number()
            if self.lx.peek() == "/":
                self.lx.i += 1
                if not self.lx.peek().isdigit():
                    raise ExprSyntaxError("expected exponent denominator", self.lx.i, ("number",))
                den, dpos = self.lx.number()
                if den == 0:
                    raise ExprSyntaxError("zero exponent denominator", dpos, ("nonzero number",))
                num = num / den
            if self.lx.peek() != ")":
                raise ExprSyntaxError("unclosed exponent", self.lx.i, (")",))
            self.lx.i += 1
            return sign * num
        if ch.isdigit():
            value, _ = self.lx.number()
            return value
        raise ExprSyntaxError("exponent must be a constant rational", self.lx.i, ("number", "("))

    def atom(self) -> Node:
        ch = self.lx.peek()
        pos = self.lx.i
        if ch == "(":
            self.lx.i += 1
            node = self.expr()
            if self.lx.peek() != ")":
                raise ExprSyntaxError("unclosed parenthesis", self.lx.i, (")",))
            self.lx.i += 1
            return node
        if ch.isdigit():
            value, npos = self.lx.number()
            return Num(value, pos=npos)
        if ch.isalpha() or ch == "_":
            name, npos = self.lx.ident()
            if name == "x":
                return Var(pos=npos)
            if name in _CONSTANTS:
                return Const(name, pos=npos)
            if name in _FUNCTIONS:
                if self.lx.peek() != "(":
                    raise ExprSyntaxError(
                        f"function {name} needs a parenthesized argument", self.lx.i, ("(",)
                    )
                self.lx.i += 1
                arg = self.expr()
                if self.lx.peek() != ")":
                    raise ExprSyntaxError("unclosed function argument", self.lx.i, (")",))
                self.lx.i += 1
                return Call(name, arg, pos=npos)
            raise ExprSyntaxError(
                f"unknown identifier {name!r}", npos, ("x", "pi", "e") + _FUNCTIONS
            )
        if ch == "":
            raise ExprSyntaxError("unexpected end of input", self.lx.i, ("number", "x", "("))
        raise ExprSyntaxError(f"unexpected character {ch!r}", self.lx.i, ("number", "x", "("))


def parse(text: str) -> Node:
    return _Parser(text).parse()


# ---------------------------------------------------------------------- printing


def _frac_text(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def to_text(node: Node) -> str:
    """Render with minimal parentheses; parse(to_text(t)) round-trips to t."""
    return _render(node, 0)


# binding strengths: + - (1), * / (2), unary - (3), ^ (4)
def _render(node: Node, parent_bind: int) -> str:
    if isinstance(node, Num):
        if node.value.denominator == 1 and node.value >= 0:
            return str(node.value.numerator)
        # rationals and decimals print as quotients to survive the round trip
        text = f"{node.value.numerator}/{node.value.denominator}"
        return f"({text})" if parent_bind >= 2 or node.value < 0 else text
    if isinstance(node, Var):
        return "x"
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Call):
        return f"{node.fn}({_render(node.arg, 0)})"
    if isinstance(node, Neg):
        inner = _render(node.arg, 3)
        text = f"-{inner}"
        return f"({text})" if parent_bind >= 3 else text
    if isinstance(node, PowNode):
        base = _render(node.base, 4)
        exponent = node.exponent
        if exponent.denominator == 1 and exponent >= 0:
            return f"{base}^{exponent.numerator}"
        return f"{base}^({_frac_text(exponent)})"
    if isinstance(node, BinOp):
        bind = 1 if node.op in "+-" else 2
        left = _render(node.left, bind - 1)
        right = _render(node.right, bind)  # left-assoc: right child needs higher bind
        text = f"{left} {node.op} {right}" if bind == 1 else f"{left}{node.op}{right}"
        return f"({text})" if parent_bind >= bind else text
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------- differentiation (symbolic)


def _num(q) -> Num:
    return Num(Fraction(q))


_ZERO = _num(0)
_ONE = _num(1)


def _is_num(node: Node, value=None) -> bool:
    return isinstance(node, Num) and (value is None or node.value == value)


def _add(a: Node, b: Node) -> Node:
    if _is_num(a, 0):
        return b
    if _is_num(b, 0):
        return a
    return BinOp("+", a, b)


def _sub(a: Node, b: Node) -> Node:
    if _is_num(b, 0):
        return a
    if _is_num(a, 0):
        return Neg(b)
    return BinOp("-", a, b)


def _mul(a: Node, b: Node) -> Node:
    if _is_num(a, 0) or _is_num(b, 0):
        return _ZERO
    if _is_num(a, 1):
        return b
    if _is_num(b, 1):
        return a
    return BinOp("*", a, b)


def _div(a: Node, b: Node) -> Node:
    if _is_num(a, 0):
        return _ZERO
    if _is_num(b, 1):
        return a
    return BinOp("/", a, b)


def _pow(base: Node, exponent: Fraction) -> Node:
    if exponent == 0:
        return _ONE
    if exponent == 1:
        return base
    return PowNode(base, exponent)


def differentiate(node: Node) -> Node:
    """d/dx with 0/1 identity folding only; no deeper simplification."""
    if isinstance(node, (Num, Const)):
        return _ZERO
    if isinstance(node, Var):
        return _ONE
    if isinstance(node, Neg):
        inner = differentiate(node.arg)
        return _ZERO if _is_num(inner, 0) else Neg(inner)
    if isinstance(node, BinOp):
        da, db = differentiate(node.left), differentiate(node.right)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            return _sub(da, db)
        if node.op == "*":
            return _add(_mul(da, node.right), _mul(node.left, db))
        if node.op == "/":
            num = _sub(_mul(da, node.right), _mul(node.left, db))
            return _div(num, _pow(node.right, Fraction(2)))
        raise ValueError(node.op)
    if isinstance(node, PowNode):
        dbase = differentiate(node.base)
        factor = _mul(_num(node.exponent), _pow(node.base, node.exponent - 1))
        return _mul(factor, dbase)
    if isinstance(node, Call):
        darg = differentiate(node.arg)
        if node.fn == "exp":
            outer: Node = Call("exp", node.arg)
        elif node.fn == "log":
            return _div(darg, node.arg)
        elif node.fn == "sin":
            outer = Call("cos", node.arg)
        elif node.fn == "cos":
            outer = Neg(Call("sin", node.arg))
        else:
            raise ValueError(node.fn)
        return _mul(outer, darg)
    raise TypeError(f"not an expression node: {node!r}")


# -------------------------------------------------------------------- evaluation


def _eval_exact(node: Node, x):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return x
    if isinstance(node, Const):
        raise ExactnessLost(f"{node.name} has no exact rational value")
    if isinstance(node, Neg):
        return -_eval_exact(node.arg, x)
    if isinstance(node, BinOp):
        a = _eval_exact(node.left, x)
        b = _eval_exact(node.right, x)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if b == 0:
            raise EvalDomainError("division by zero", node.pos)
        return a / b
    if isinstance(node, PowNode):
        base = Fraction(_eval_exact(node.base, x))
        ex = node.exponent
        if ex.denominator == 1:
            n = ex.numerator
            if n < 0 and base == 0:
                raise EvalDomainError("zero to a negative power", node.pos)
            return base**n
        if base == 0:
            return Fraction(0)
        if base < 0:
            raise ExactnessLost("fractional power of a negative rational")
        root = _fraction_root(base, ex.denominator)
        return root**ex.numerator
    if isinstance(node, Call):
        raise ExactnessLost(f"{node.fn} has no exact rational value")
    raise TypeError(f"not an expression node: {node!r}")


def _eval_mp(node: Node, x):
    if isinstance(node, Num):
        return mpf(node.value.numerator) / node.value.denominator
    if isinstance(node, Var):
        return x
    if isinstance(node, Const):
        return +mpmath.pi if node.name == "pi" else +mpmath.e
    if isinstance(node, Neg):
        return -_eval_mp(node.arg, x)
    if isinstance(node, BinOp):
        a = _eval_mp(node.left, x)
        b = _eval_mp(node.right, x)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if b == 0:
            raise EvalDomainError("division by zero", node.pos)
        return a / b
    if isinstance(node, PowNode):
        base = _eval_mp(node.base, x)
        ex = node.exponent
        if ex.denominator == 1:
            n = ex.numerator
            if base == 0:
                if n < 0:
                    raise EvalDomainError("zero to a negative power", node.pos)
                return mpf(0) if n else mpf(1)
            return base**n
        if isinstance(base, mpc):
            return base ** (mpf(ex.numerator) / ex.denominator)
        if base < 0:
            raise EvalDomainError("fractional power of a negative real", node.pos)
        return base ** (mpf(ex.numerator) / ex.denominator)
    if isinstance(node, Call):
        arg = _eval_mp(node.arg, x)
        if node.fn == "exp":
            return mpmath.exp(arg)
        if node.fn == "log":
            if not isinstance(arg, mpc) and arg <= 0:
                raise EvalDomainError("log of a non-positive real", node.pos)
            return mpmath.log(arg)
        if node.fn == "sin":
            return mpmath.sin(arg)
        return mpmath.cos(arg)
    raise TypeError(f"not an expression node: {node!r}")


def _eval_double(node: Node, x):
    lib = cmath if isinstance(x, complex) else math
    if isinstance(node, Num):
        return node.value.numerator / node.value.denominator
    if isinstance(node, Var):
        return x
    if isinstance(node, Const):
        return math.pi if node.name == "pi" else math.e
    if isinstance(node, Neg):
        return -_eval_double(node.arg, x)
    if isinstance(node, BinOp):
        a = _eval_double(node.left, x)
        b = _eval_double(node.right, x)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if b == 0:
            raise EvalDomainError("division by zero", node.pos)
        return a / b
    if isinstance(node, PowNode):
        base = _eval_double(node.base, x)
        ex = node.exponent
        try:
            if ex.denominator == 1:
                if base == 0 and ex.numerator < 0:
                    raise EvalDomainError("zero to a negative power", node.pos)
                return base**ex.numerator
            if not isinstance(base, complex) and base < 0:
                raise EvalDomainError("fractional power of a negative real", node.pos)
            return base ** (ex.numerator / ex.denominator)
        except OverflowError:
            raise EvalDomainError("overflow in power", node.pos) from None
    if isinstance(node, Call):
        arg = _eval_double(node.arg, x)
        try:
            if node.fn == "exp":
                return lib.exp(arg)
            if node.fn == "log":
                if not isinstance(arg, complex) and arg <= 0:
                    raise EvalDomainError("log of a non-positive real", node.pos)
                return lib.log(arg)
            if node.fn == "sin":
                return lib.sin(arg)
            return lib.cos(arg)
        except OverflowError:
            raise EvalDomainError(f"overflow in {node.fn}", node.pos) from None
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(node: Node, x):
    """Evaluate at x, dispatching on its type (mp / double / exact)."""
    if isinstance(x, (mpf, mpc)):
        return _eval_mp(node, x)
    if isinstance(x, (float, complex)):
        return _eval_double(node, x)
    if isinstance(x, (int, Fraction)):
        return _eval_exact(node, Fraction(x))
    raise TypeError(f"unsupported argument type {type(x)!r}")


class Oracle:
    """Callable wrapper that counts evaluations.

    The count increments exactly once per call, whatever backend runs
    underneath, so evaluation budgets can be audited after a solve.
    """

    def __init__(self, fn, label: str = ""):
        self._fn = fn
        self.label = label
        self.count = 0

    def __call__(self, x):
        self.count += 1
        return self._fn(x)

    def reset(self):
        self.count = 0


def oracle_for(node: Node, label: str = "") -> Oracle:
    return Oracle(lambda x: evaluate(node, x), label=label)


def derivative_oracle(node: Node, user_fn=None, label: str = "f'") -> Oracle:
    """Oracle for f': symbolic by default, user callable if supplied."""
    if user_fn is not None:
        return Oracle(user_fn, label=label)
    return oracle_for(differentiate(node), label=label)
