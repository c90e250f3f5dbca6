"""Scalar coefficient expressions in the frequency variable ``s`` and parameters.

The frequency-domain pencils handled by this package are affine sums
``K(s, p) = sum_i kappa_i(s, p) * A_i`` whose scalar coefficients are drawn
from a small, fixed grammar: constants, the complex frequency ``s``, real
parameter components ``p0 .. p9``, powers with a real exponent, exponentials
``exp(c * sub)`` with a real factor ``c``, sums, products, and negation.
That grammar covers first-order, second-order, delay and fractional-order
pencils as well as affine parameter coefficients, while staying closed under
symbolic differentiation and round-trippable through a plain text syntax.

Text syntax (whitespace-insensitive)::

    expr   := term (('+' | '-') term)*
    term   := factor ('*' factor)*
    factor := '-' factor | power
    power  := atom ('^' number)?
    atom   := number | number 'j' | 's' | 'p' digits | 'exp' '(' expr ')'
            | '(' expr ')'

Numbers are decimal literals (``1``, ``-0.25``, ``1e-3``); a trailing ``j``
marks an imaginary literal. There is no division: use negative exponents.
"""

from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass


class ExprError(ValueError):
    """Malformed expression, bad arity, or invalid evaluation domain."""


class EvalOverflowError(ExprError):
    """Evaluation produced a non-finite value (e.g. exp overflow)."""


def _wrap(value):
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, complex)):
        return Const(complex(value))
    raise TypeError(f"cannot build an expression from {type(value).__name__}")


class Expr:
    """Base class for expression nodes. Instances are immutable."""

    __slots__ = ()

    @property
    def arity(self) -> int:
        """Number of parameter components the expression refers to."""
        return _arity(self)

    def __call__(self, s, p=()):
        return eval_expr(self, s, p)

    def diff(self, var: str) -> "Expr":
        return diff_expr(self, var)

    def __add__(self, other):
        return Add((self, _wrap(other)))

    def __radd__(self, other):
        return Add((_wrap(other), self))

    def __sub__(self, other):
        return Add((self, Neg(_wrap(other))))

    def __rsub__(self, other):
        return Add((_wrap(other), Neg(self)))

    def __mul__(self, other):
        return Mul((self, _wrap(other)))

    def __rmul__(self, other):
        return Mul((_wrap(other), self))

    def __neg__(self):
        return Neg(self)

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("exponent must be a real number")
        return Pow(self, float(exponent))

    def __repr__(self):
        return f"{type(self).__name__}({to_text(self)!r})"


@dataclass(frozen=True, repr=False)
class Const(Expr):
    """Real or complex constant."""

    value: complex

    __slots__ = ("value",)

    def __post_init__(self):
        object.__setattr__(self, "value", complex(self.value))


@dataclass(frozen=True, repr=False)
class Freq(Expr):
    """The complex frequency variable ``s``."""

    __slots__ = ()


@dataclass(frozen=True, repr=False)
class Param(Expr):
    """Parameter component ``p_j`` (0-based index)."""

    index: int

    __slots__ = ("index",)

    def __post_init__(self):
        if not 0 <= self.index <= 9:
            raise ExprError(f"parameter index out of range: {self.index}")


@dataclass(frozen=True, repr=False)
class Pow(Expr):
    """``base ** exponent`` with a real (possibly fractional) exponent."""

    base: Expr
    exponent: float

    __slots__ = ("base", "exponent")


@dataclass(frozen=True, repr=False)
class Exp(Expr):
    """``exp(coeff * arg)`` with a real coefficient."""

    coeff: float
    arg: Expr

    __slots__ = ("coeff", "arg")


@dataclass(frozen=True, repr=False)
class Add(Expr):
    terms: tuple

    __slots__ = ("terms",)


@dataclass(frozen=True, repr=False)
class Mul(Expr):
    factors: tuple

    __slots__ = ("factors",)


@dataclass(frozen=True, repr=False)
class Neg(Expr):
    arg: Expr

    __slots__ = ("arg",)


#: Singleton frequency variable, convenient for building pencils: ``S**2``.
S = Freq()

ONE = Const(1.0)
ZERO = Const(0.0)


def param(j: int) -> Param:
    return Param(j)


def delay_factor(tau: float) -> Exp:
    """``exp(-tau * s)``, the coefficient of a state-delay matrix."""
    return Exp(-float(tau), S)


def _arity(e: Expr) -> int:
    if isinstance(e, Param):
        return e.index + 1
    if isinstance(e, (Const, Freq)):
        return 0
    if isinstance(e, Pow):
        return _arity(e.base)
    if isinstance(e, (Exp, Neg)):
        return _arity(e.arg)
    if isinstance(e, Add):
        return max((_arity(t) for t in e.terms), default=0)
    if isinstance(e, Mul):
        return max((_arity(f) for f in e.factors), default=0)
    raise TypeError(f"unknown node {type(e).__name__}")


def _eval(e: Expr, s: complex, p) -> complex:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Freq):
        return s
    if isinstance(e, Param):
        return complex(p[e.index])
    if isinstance(e, Pow):
        base = _eval(e.base, s, p)
        a = e.exponent
        if a == int(a):
            return base ** int(a)
        # principal branch; reject the branch cut on the negative real axis
        if base.imag == 0.0 and base.real < 0.0:
            raise ExprError(
                f"fractional power of a negative real value {base.real!r}"
            )
        return base ** a
    if isinstance(e, Exp):
        try:
            return cmath.exp(e.coeff * _eval(e.arg, s, p))
        except OverflowError:
            raise EvalOverflowError(
                f"exp overflow evaluating {to_text(e)!r} at s={s!r}"
            ) from None
    if isinstance(e, Add):
        return sum(_eval(t, s, p) for t in e.terms)
    if isinstance(e, Mul):
        out = complex(1.0)
        for f in e.factors:
            out *= _eval(f, s, p)
        return out
    if isinstance(e, Neg):
        return -_eval(e.arg, s, p)
    raise TypeError(f"unknown node {type(e).__name__}")


def eval_expr(e: Expr, s: complex, p=()) -> complex:
    """Evaluate ``e`` at frequency ``s`` and parameter vector ``p``.

    Raises
    ------
    ExprError
        If ``p`` is shorter than the expression's arity, if a fractional
        power hits the negative real axis, or if the result is non-finite
        (overflow is reported, never silently propagated).
    """
    if len(p) < _arity(e):
        raise ExprError(
            f"expression needs {_arity(e)} parameter(s), got {len(p)}"
        )
    value = _eval(e, complex(s), p)
    if not (math.isfinite(value.real) and math.isfinite(value.imag)):
        raise EvalOverflowError(
            f"non-finite value {value!r} evaluating {to_text(e)!r} at s={s!r}"
        )
    return value


def _is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0


def _add(terms) -> Expr:
    kept = tuple(t for t in terms if not _is_zero(t))
    if not kept:
        return ZERO
    if len(kept) == 1:
        return kept[0]
    return Add(kept)


def _mul(factors) -> Expr:
    fs = tuple(factors)
    if any(_is_zero(f) for f in fs):
        return ZERO
    kept = tuple(f for f in fs if not (isinstance(f, Const) and f.value == 1))
    if not kept:
        return ONE
    if len(kept) == 1:
        return kept[0]
    return Mul(kept)


def diff_expr(e: Expr, var: str) -> Expr:
    """Symbolic derivative of ``e`` with respect to ``"s"`` or ``"p<j>"``.

    The grammar is closed under differentiation, so the result is again an
    expression node; only structural zeros are pruned (no simplification).
    """
    if var == "s":
        wrt_s, idx = True, -1
    elif re.fullmatch(r"p\d", var):
        wrt_s, idx = False, int(var[1:])
    else:
        raise ExprError(f"unknown differentiation variable {var!r}")

    def d(node: Expr) -> Expr:
        if isinstance(node, Const):
            return ZERO
        if isinstance(node, Freq):
            return ONE if wrt_s else ZERO
        if isinstance(node, Param):
            return ONE if (not wrt_s and node.index == idx) else ZERO
        if isinstance(node, Pow):
            inner = d(node.base)
            if _is_zero(inner) or node.exponent == 0:
                return ZERO
            return _mul(
                (Const(node.exponent), Pow(node.base, node.exponent - 1.0), inner)
            )
        if isinstance(node, Exp):
            inner = d(node.arg)
            if _is_zero(inner):
                return ZERO
            return _mul((Const(node.coeff), inner, node))
        if isinstance(node, Add):
            return _add(d(t) for t in node.terms)
        if isinstance(node, Mul):
            pieces = []
            for i, f in enumerate(node.factors):
                df = d(f)
                if _is_zero(df):
                    continue
                rest = node.factors[:i] + node.factors[i + 1:]
                pieces.append(_mul(rest + (df,)))
            return _add(pieces)
        if isinstance(node, Neg):
            inner = d(node.arg)
            return ZERO if _is_zero(inner) else Neg(inner)
        raise TypeError(f"unknown node {type(node).__name__}")

    return d(e)


def depends_on_s(e: Expr) -> bool:
    if isinstance(e, Freq):
        return True
    if isinstance(e, (Const, Param)):
        return False
    if isinstance(e, Pow):
        return depends_on_s(e.base)
    if isinstance(e, (Exp, Neg)):
        return depends_on_s(e.arg)
    if isinstance(e, Add):
        return any(depends_on_s(t) for t in e.terms)
    if isinstance(e, Mul):
        return any(depends_on_s(f) for f in e.factors)
    raise TypeError(f"unknown node {type(e).__name__}")


# ---------------------------------------------------------------------------
# text serialization

def _fmt_real(x: float) -> str:
    # repr round-trips doubles bit-identically
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _fmt_const(v: complex) -> str:
    if v.imag == 0.0:
        re_part = _fmt_real(v.real)
        return f"({re_part})" if v.real < 0 else re_part
    if v.real == 0.0:
        im = _fmt_real(v.imag)
        return f"({im}j)" if v.imag < 0 else f"{im}j"
    sign = "+" if v.imag >= 0 else "-"
    return f"({_fmt_real(v.real)}{sign}{_fmt_real(abs(v.imag))}j)"


# precedence: add=0, mul=1, unary=2, pow=3, atom=4
def _text(e: Expr, parent: int) -> str:
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Freq):
        return "s"
    if isinstance(e, Param):
        return f"p{e.index}"
    if isinstance(e, Pow):
        body = f"{_text(e.base, 3)}^{_fmt_real(e.exponent)}"
        return f"({body})" if parent > 3 else body
    if isinstance(e, Exp):
        if e.coeff == 1.0:
            return f"exp({_text(e.arg, 0)})"
        return f"exp({_fmt_const(complex(e.coeff))}*{_text(e.arg, 1)})"
    if isinstance(e, Add):
        body = "+".join(_text(t, 1) for t in e.terms)
        return f"({body})" if parent > 0 else body
    if isinstance(e, Mul):
        body = "*".join(_text(f, 2) for f in e.factors)
        return f"({body})" if parent > 1 else body
    if isinstance(e, Neg):
        body = f"-{_text(e.arg, 2)}"
        return f"({body})" if parent > 1 else body
    raise TypeError(f"unknown node {type(e).__name__}")


def to_text(e: Expr) -> str:
    """Serialize to the documented infix syntax."""
    return _text(e, 0)


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<imag>j)?"
    r"|(?P<name>exp|s|p\d)"
    r"|(?P<op>[-+*^()])"
    r")"
)


def _tokenize(text: str):
    pos, out = 0, []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprError(f"cannot tokenize {text[pos:pos + 12]!r}")
        if m.group("num") is not None:
            v = float(m.group("num"))
            out.append(("num", 1j * v if m.group("imag") else v))
        elif m.group("name") is not None:
            out.append(("name", m.group("name")))
        else:
            out.append(("op", m.group("op")))
        pos = m.end()
    out.append(("end", None))
    return out


class _Parser:
    def __init__(self, tokens):
        self.toks = tokens
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, op: str):
        kind, val = self.take()
        if kind != "op" or val != op:
            raise ExprError(f"expected {op!r}, found {val!r}")

    def expr(self) -> Expr:
        terms = [self.term()]
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            _, op = self.take()
            t = self.term()
            terms.append(Neg(t) if op == "-" else t)
        return terms[0] if len(terms) == 1 else Add(tuple(terms))

    def term(self) -> Expr:
        factors = [self.factor()]
        while self.peek() == ("op", "*"):
            self.take()
            factors.append(self.factor())
        return factors[0] if len(factors) == 1 else Mul(tuple(factors))

    def factor(self) -> Expr:
        if self.peek() == ("op", "-"):
            self.take()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            sign = 1.0
            if self.peek() == ("op", "-"):
                self.take()
                sign = -1.0
            kind, val = self.take()
            if kind != "num" or isinstance(val, complex):
                raise ExprError("exponent must be a real literal")
            return Pow(base, sign * val)
        return base

    def atom(self) -> Expr:
        kind, val = self.take()
        if kind == "num":
            return Const(complex(val))
        if kind == "name":
            if val == "s":
                return S
            if val == "exp":
                self.expect("(")
                inner = self.expr()
                self.expect(")")
                return Exp(1.0, inner)
            return Param(int(val[1:]))
        if (kind, val) == ("op", "("):
            inner = self.expr()
            self.expect(")")
            return inner
        raise ExprError(f"unexpected token {val!r}")


def parse_expr(text: str) -> Expr:
    """Parse the documented infix syntax into an expression tree."""
    p = _Parser(_tokenize(text))
    e = p.expr()
    if p.peek() != ("end", None):
        raise ExprError(f"trailing input near {p.peek()[1]!r}")
    return e
