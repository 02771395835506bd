"""Scalar expressions over state variables ``x1..xn``.

Expressions are immutable trees.  Raw trees come out of :func:`parse` exactly
as written; :func:`simplify` maps any tree to a canonical form in which

* sums and products are flattened n-ary nodes,
* like terms are collected and products of sums are expanded,
* terms and factors are sorted by a deterministic structural key,
* coefficients are exact rationals (``fractions.Fraction``).

Canonical forms are built on a sparse polynomial representation over
"atoms" (variables, ``sin``/``cos``/``exp`` applications and reciprocals of
canonical denominators), so two canonical trees are structurally equal iff
their polynomial forms are equal.

Grammar::

    expr     := term (("+" | "-") term)*
    term     := unary (("*" | "/") unary)*
    unary    := ("-" | "+") unary | power
    power    := primary ["^" exponent]
    exponent := INTEGER | NAME | "(" exponent ")"
    primary  := NUMBER | VAR | NAME | FUNC "(" expr ")" | "(" expr ")"
    VAR      := "x" DIGITS            (1-based index, must be <= n)
    FUNC     := "sin" | "cos" | "exp"
    NUMBER   := DIGITS ["." DIGITS] [("e" | "E") ["+" | "-"] DIGITS]

``NAME`` refers to a caller-supplied binding (see ``parse(..., names=...)``);
in exponent position it must be bound to a non-negative integer.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence, Union

__all__ = [
    "Expr", "Const", "Var", "Neg", "Func", "Add", "Sub", "Mul", "Div", "Pow",
    "ScalarField", "ParseError", "EvaluationError", "ExpressionTooLarge",
    "parse", "parse_expr", "evaluate", "partial", "simplify", "to_string",
    "count_nodes", "compile_expr", "const", "var", "ZERO", "ONE",
]

Number = Union[int, float, Fraction]

FUNCTIONS = {"sin": math.sin, "cos": math.cos, "exp": math.exp}


class ParseError(ValueError):
    """Malformed expression text.  ``position`` is a 0-based column."""

    def __init__(self, message: str, position: int, source: str = ""):
        self.position = position
        self.source = source
        detail = f"{message} at position {position}"
        if source:
            detail += f"\n  {source}\n  {' ' * position}^"
        super().__init__(detail)


class EvaluationError(ArithmeticError):
    def __init__(self, message: str, subexpr: "Expr"):
        self.subexpr = subexpr
        super().__init__(f"{message}: {to_string(subexpr)}")


class ExpressionTooLarge(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# nodes


class Expr:
    """Base class of all expression nodes.  Instances are immutable."""

    __slots__ = ("_key", "_hash", "_poly", "_canon")
    rank = -1

    def __init__(self):
        self._key = None
        self._hash = None
        self._poly = None
        self._canon = None

    @property
    def children(self) -> tuple["Expr", ...]:
        return ()

    @property
    def key(self) -> tuple:
        if self._key is None:
            self._key = self._make_key()
        return self._key

    def _make_key(self) -> tuple:
        raise NotImplementedError

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Expr):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.key)
        return self._hash

    def __repr__(self):
        return f"Expr({to_string(self)!r})"

    def __str__(self):
        return to_string(self)

    # arithmetic sugar builds raw trees
    def __add__(self, other):
        return Add(self, _lift(other))

    def __radd__(self, other):
        return Add(_lift(other), self)

    def __sub__(self, other):
        return Sub(self, _lift(other))

    def __rsub__(self, other):
        return Sub(_lift(other), self)

    def __mul__(self, other):
        return Mul(self, _lift(other))

    def __rmul__(self, other):
        return Mul(_lift(other), self)

    def __truediv__(self, other):
        return Div(self, _lift(other))

    def __rtruediv__(self, other):
        return Div(_lift(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, k: int):
        return Pow(self, k)


def _lift(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return Const(value)


def _to_fraction(value: Number) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("boolean is not a numeric constant")
    if isinstance(value, int):
        return Fraction(value)
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"non-finite constant {value!r}")
    return Fraction(value)


class Const(Expr):
    __slots__ = ("value",)
    rank = 0

    def __init__(self, value: Number):
        super().__init__()
        self.value = _to_fraction(value)

    def _make_key(self):
        return (0, self.value)


class Var(Expr):
    __slots__ = ("index",)
    rank = 1

    def __init__(self, index: int):
        super().__init__()
        if not isinstance(index, int) or index < 1:
            raise ValueError(f"variable index must be a positive integer, got {index!r}")
        self.index = index

    def _make_key(self):
        return (1, self.index)


class Func(Expr):
    __slots__ = ("name", "arg")
    rank = 2

    def __init__(self, name: str, arg: Expr):
        super().__init__()
        if name not in FUNCTIONS:
            raise ValueError(f"unknown function {name!r}")
        self.name = name
        self.arg = arg

    @property
    def children(self):
        return (self.arg,)

    def _make_key(self):
        return (2, self.name, self.arg.key)


class Pow(Expr):
    __slots__ = ("base", "exp")
    rank = 3

    def __init__(self, base: Expr, exp: int):
        super().__init__()
        if isinstance(exp, Fraction) and exp.denominator == 1:
            exp = int(exp)
        if isinstance(exp, bool) or not isinstance(exp, int) or exp < 0:
            raise ValueError(f"exponent must be a non-negative integer, got {exp!r}")
        self.base = base
        self.exp = exp

    @property
    def children(self):
        return (self.base,)

    def _make_key(self):
        return (3, self.base.key, self.exp)


class Mul(Expr):
    __slots__ = ("args",)
    rank = 4

    def __init__(self, *args: Expr):
        super().__init__()
        if len(args) < 2:
            raise ValueError("Mul needs at least two factors")
        self.args = tuple(args)

    @property
    def children(self):
        return self.args

    def _make_key(self):
        return (4, tuple(a.key for a in self.args))


class Add(Expr):
    __slots__ = ("args",)
    rank = 5

    def __init__(self, *args: Expr):
        super().__init__()
        if len(args) < 2:
            raise ValueError("Add needs at least two terms")
        self.args = tuple(args)

    @property
    def children(self):
        return self.args

    def _make_key(self):
        return (5, tuple(a.key for a in self.args))


class Div(Expr):
    __slots__ = ("num", "den")
    rank = 6

    def __init__(self, num: Expr, den: Expr):
        super().__init__()
        self.num = num
        self.den = den

    @property
    def children(self):
        return (self.num, self.den)

    def _make_key(self):
        return (6, self.num.key, self.den.key)


class Neg(Expr):
    __slots__ = ("arg",)
    rank = 7

    def __init__(self, arg: Expr):
        super().__init__()
        self.arg = arg

    @property
    def children(self):
        return (self.arg,)

    def _make_key(self):
        return (7, self.arg.key)


class Sub(Expr):
    __slots__ = ("left", "right")
    rank = 8

    def __init__(self, left: Expr, right: Expr):
        super().__init__()
        self.left = left
        self.right = right

    @property
    def children(self):
        return (self.left, self.right)

    def _make_key(self):
        return (8, self.left.key, self.right.key)


ZERO = Const(0)
ONE = Const(1)


def const(value: Number) -> Const:
    return Const(value)


def var(index: int) -> Var:
    return Var(index)


def count_nodes(e: Expr) -> int:
    total = 0
    stack = [e]
    while stack:
        node = stack.pop()
        total += 1
        stack.extend(node.children)
    return total


def max_var_index(e: Expr) -> int:
    best = 0
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            best = max(best, node.index)
        stack.extend(node.children)
    return best


# ---------------------------------------------------------------------------
# polynomial normal form
#
# Poly: dict mapping a monomial to a nonzero Fraction coefficient.
# Monomial: tuple of (atom_id, power) pairs sorted by atom_id, power >= 1.
# Atoms are interned canonical trees (Var, Func, Div(1, den)); ids are only
# used for hashing/merging, the canonical *ordering* always uses atom keys.

_ATOMS: list[Expr] = []
_ATOM_IDS: dict[tuple, int] = {}
_DERIV_CACHE: dict[tuple[int, int], dict] = {}


def _atom_id(atom: Expr) -> int:
    k = atom.key
    idx = _ATOM_IDS.get(k)
    if idx is None:
        idx = len(_ATOMS)
        _ATOMS.append(atom)
        _ATOM_IDS[k] = idx
    return idx


def _p_const(c: Fraction) -> dict:
    return {(): c} if c else {}


def _p_atom(atom: Expr) -> dict:
    return {((_atom_id(atom), 1),): Fraction(1)}


def _p_add(a: dict, b: dict, scale: Fraction = Fraction(1)) -> dict:
    out = dict(a)
    for m, c in b.items():
        v = out.get(m, 0) + scale * c
        if v:
            out[m] = v
        else:
            out.pop(m, None)
    return out


def _p_scale(a: dict, s: Fraction) -> dict:
    if not s:
        return {}
    return {m: c * s for m, c in a.items()}


def _mono_mul(m1: tuple, m2: tuple) -> tuple:
    if not m1:
        return m2
    if not m2:
        return m1
    d = dict(m1)
    for i, p in m2:
        d[i] = d.get(i, 0) + p
    return tuple(sorted(d.items()))


def _p_mul(a: dict, b: dict) -> dict:
    if not a or not b:
        return {}
    out: dict = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            m = _mono_mul(m1, m2)
            v = out.get(m, 0) + c1 * c2
            if v:
                out[m] = v
            else:
                out.pop(m, None)
    return out


def _p_pow(a: dict, k: int) -> dict:
    result = {(): Fraction(1)}
    base = a
    while k:
        if k & 1:
            result = _p_mul(result, base)
        k >>= 1
        if k:
            base = _p_mul(base, base)
    return result


def _p_constant_value(a: dict):
    """Return the constant if ``a`` is constant, else None."""
    if not a:
        return Fraction(0)
    if len(a) == 1 and () in a:
        return a[()]
    return None


def _poly(e: Expr) -> dict:
    if e._poly is not None:
        return e._poly
    if isinstance(e, Const):
        p = _p_const(e.value)
    elif isinstance(e, Var):
        p = _p_atom(e)
    elif isinstance(e, Add):
        p = {}
        for a in e.args:
            p = _p_add(p, _poly(a))
    elif isinstance(e, Sub):
        p = _p_add(_poly(e.left), _poly(e.right), Fraction(-1))
    elif isinstance(e, Neg):
        p = _p_scale(_poly(e.arg), Fraction(-1))
    elif isinstance(e, Mul):
        p = {(): Fraction(1)}
        for a in e.args:
            p = _p_mul(p, _poly(a))
    elif isinstance(e, Pow):
        p = _p_pow(_poly(e.base), e.exp)
    elif isinstance(e, Func):
        pa = _poly(e.arg)
        c = _p_constant_value(pa)
        if c is not None:
            p = _p_const(Fraction(FUNCTIONS[e.name](float(c))))
        else:
            p = _p_atom(Func(e.name, _from_poly(pa)))
    elif isinstance(e, Div):
        p = _div_poly(_poly(e.num), _poly(e.den))
    else:  # pragma: no cover
        raise TypeError(f"unknown node {type(e).__name__}")
    e._poly = p
    return p


def _div_poly(num: dict, den: dict) -> dict:
    c = _p_constant_value(den)
    if c is not None and c != 0:
        return _p_scale(num, 1 / c)
    if c is not None:
        # literal division by zero stays symbolic; evaluation raises
        return _p_mul(num, _p_atom(Div(ONE, ZERO)))
    # normalise the denominator so that its leading coefficient is 1
    lead_mono = min(den, key=_mono_sort_key)
    lead = den[lead_mono]
    den_n = _p_scale(den, 1 / lead)
    recip = Div(ONE, _from_poly(den_n))
    return _p_scale(_p_mul(num, _p_atom(recip)), 1 / lead)


def _mono_factors(mono: tuple) -> list[tuple[Expr, int]]:
    factors = [(_ATOMS[i], p) for i, p in mono]
    factors.sort(key=lambda ap: ap[0].key)
    return factors


def _mono_sort_key(mono: tuple):
    degree = sum(p for _, p in mono)
    return (-degree, tuple((a.key, -p) for a, p in _mono_factors(mono)))


def _from_poly(p: dict) -> Expr:
    if not p:
        return ZERO
    terms = []
    for mono in sorted(p, key=_mono_sort_key):
        c = p[mono]
        factors = [a if k == 1 else Pow(a, k) for a, k in _mono_factors(mono)]
        if not factors:
            terms.append(Const(c))
        elif c == 1:
            terms.append(factors[0] if len(factors) == 1 else Mul(*factors))
        else:
            terms.append(Mul(Const(c), *factors))
    result = terms[0] if len(terms) == 1 else Add(*terms)
    result._poly = p
    result._canon = result
    return result


def simplify(e: Expr) -> Expr:
    """Canonical form of ``e``; idempotent and value-preserving."""
    if e._canon is None:
        e._canon = _from_poly(_poly(e))
    return e._canon


# ---------------------------------------------------------------------------
# differentiation


def _atom_derivative(atom_id: int, i: int) -> dict:
    cache_key = (atom_id, i)
    hit = _DERIV_CACHE.get(cache_key)
    if hit is not None:
        return hit
    atom = _ATOMS[atom_id]
    if isinstance(atom, Var):
        d = _p_const(Fraction(1)) if atom.index == i else {}
    elif isinstance(atom, Func):
        da = _p_partial(_poly(atom.arg), i)
        if not da:
            d = {}
        elif atom.name == "sin":
            d = _p_mul(_p_atom(Func("cos", atom.arg)), da)
        elif atom.name == "cos":
            d = _p_scale(_p_mul(_p_atom(Func("sin", atom.arg)), da), Fraction(-1))
        else:
            d = _p_mul(_p_atom(atom), da)
    elif isinstance(atom, Div):
        dq = _p_partial(_poly(atom.den), i)
        d = _p_scale(_p_mul(dq, _p_pow(_p_atom(atom), 2)), Fraction(-1)) if dq else {}
    else:  # pragma: no cover
        raise TypeError(f"not an atom: {atom!r}")
    _DERIV_CACHE[cache_key] = d
    return d


def _p_partial(p: dict, i: int) -> dict:
    out: dict = {}
    for mono, c in p.items():
        for pos, (aid, power) in enumerate(mono):
            da = _atom_derivative(aid, i)
            if not da:
                continue
            rest = list(mono)
            if power == 1:
                del rest[pos]
            else:
                rest[pos] = (aid, power - 1)
            term = _p_mul({tuple(rest): c * power}, da)
            out = _p_add(out, term)
    return out


def partial_expr(e: Expr, i: int) -> Expr:
    return _from_poly(_p_partial(_poly(e), i))


# ---------------------------------------------------------------------------
# printing

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(e: Expr) -> int:
    if isinstance(e, Const):
        v = e.value
        if v < 0:
            return 5  # printed parenthesised
        return 5
    return _PREC.get(type(e), 5)


def _fmt_const(v: Fraction) -> str:
    if v.denominator == 1:
        s = str(v.numerator)
        return f"({s})" if v < 0 else s
    return f"({v.numerator}/{v.denominator})"


def to_string(e: Expr) -> str:
    """Render ``e`` so that ``parse`` reproduces the same tree shape."""
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Func):
        return f"{e.name}({to_string(e.arg)})"
    if isinstance(e, Pow):
        b = to_string(e.base)
        if _prec(e.base) < 5:
            b = f"({b})"
        return f"{b}^{e.exp}"
    if isinstance(e, Neg):
        a = to_string(e.arg)
        if _prec(e.arg) < 3:
            a = f"({a})"
        return f"-{a}"
    if isinstance(e, (Add, Mul)):
        op = " + " if isinstance(e, Add) else "*"
        p = _prec(e)
        parts = []
        for idx, a in enumerate(e.args):
            s = to_string(a)
            ap = _prec(a)
            if ap < p or (idx > 0 and ap == p):
                s = f"({s})"
            parts.append(s)
        return op.join(parts)
    if isinstance(e, (Sub, Div)):
        left, right = e.children
        op = " - " if isinstance(e, Sub) else "/"
        p = _prec(e)
        ls, rs = to_string(left), to_string(right)
        if _prec(left) < p:
            ls = f"({ls})"
        if _prec(right) <= p:
            rs = f"({rs})"
        return f"{ls}{op}{rs}"
    raise TypeError(f"unknown node {type(e).__name__}")  # pragma: no cover


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(src):
        if src[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(src, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {src[pos]!r}", pos, src)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), start))
        pos = m.end()
    toks.append(_Tok("end", "", len(src)))
    return toks


class _Parser:
    def __init__(self, src: str, dimension: int, names: Mapping[str, object]):
        self.src = src
        self.n = dimension
        self.names = dict(names)
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        raise ParseError(msg, tok.pos, self.src)

    def expect(self, text: str):
        t = self.peek()
        if t.kind != "op" or t.text != text:
            self.error(f"expected {text!r}")
        self.take()

    def parse(self) -> Expr:
        if self.peek().kind == "end":
            self.error("empty expression")
        e = self.expr()
        if self.peek().kind != "end":
            self.error(f"unexpected token {self.peek().text!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            r = self.term()
            e = Add(e, r) if op == "+" else Sub(e, r)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.take().text
            r = self.unary()
            e = Mul(e, r) if op == "*" else Div(e, r)
        return e

    def unary(self) -> Expr:
        t = self.peek()
        if t.kind == "op" and t.text == "-":
            self.take()
            return Neg(self.unary())
        if t.kind == "op" and t.text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        t = self.peek()
        if t.kind == "op" and t.text == "^":
            self.take()
            return Pow(base, self.exponent())
        return base

    def exponent(self) -> int:
        t = self.peek()
        if t.kind == "op" and t.text == "(":
            self.take()
            k = self.exponent()
            self.expect(")")
            return k
        if t.kind == "op" and t.text == "-":
            self.error("non-integer exponent (negative powers are not allowed)")
        if t.kind == "num":
            self.take()
            value = Fraction(t.text)
            if value.denominator != 1:
                self.error(f"non-integer exponent {t.text!r}", t)
            return int(value)
        if t.kind == "name" and t.text in self.names:
            self.take()
            value = self.names[t.text]
            if isinstance(value, Const):
                value = value.value
            if isinstance(value, Expr):
                self.error(f"exponent {t.text!r} is not an integer constant", t)
            value = Fraction(value)
            if value.denominator != 1 or value < 0:
                self.error(f"non-integer exponent {t.text}={value}", t)
            return int(value)
        self.error("non-integer exponent")

    def primary(self) -> Expr:
        t = self.take()
        if t.kind == "num":
            return Const(Fraction(t.text))
        if t.kind == "op" and t.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "name":
            name = t.text
            if name in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(name, arg)
            if name in self.names:
                value = self.names[name]
                return value if isinstance(value, Expr) else Const(value)
            m = re.fullmatch(r"x(\d+)", name)
            if m:
                idx = int(m.group(1))
                if idx < 1 or idx > self.n:
                    raise ParseError(
                        f"unknown variable {name!r} (dimension {self.n})", t.pos, self.src)
                return Var(idx)
            raise ParseError(f"unknown variable {name!r}", t.pos, self.src)
        if t.kind == "end":
            raise ParseError("unexpected end of input", t.pos, self.src)
        raise ParseError(f"unexpected token {t.text!r}", t.pos, self.src)


def parse_expr(source: str, dimension: int, names: Mapping[str, object] | None = None) -> Expr:
    return _Parser(source, dimension, names or {}).parse()


# ---------------------------------------------------------------------------
# evaluation


def _eval(e: Expr, x: Sequence[float]) -> float:
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Var):
        return float(x[e.index - 1])
    if isinstance(e, Add):
        total = _eval(e.args[0], x)
        for a in e.args[1:]:
            total = total + _eval(a, x)
        return total
    if isinstance(e, Mul):
        total = _eval(e.args[0], x)
        for a in e.args[1:]:
            total = total * _eval(a, x)
        return total
    if isinstance(e, Sub):
        return _eval(e.left, x) - _eval(e.right, x)
    if isinstance(e, Neg):
        return -_eval(e.arg, x)
    if isinstance(e, Pow):
        return _eval(e.base, x) ** e.exp
    if isinstance(e, Div):
        den = _eval(e.den, x)
        if den == 0.0:
            raise EvaluationError("division by zero", e)
        return _eval(e.num, x) / den
    if isinstance(e, Func):
        try:
            return FUNCTIONS[e.name](_eval(e.arg, x))
        except OverflowError:
            raise EvaluationError("overflow", e) from None
    raise TypeError(f"unknown node {type(e).__name__}")  # pragma: no cover


def _code(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        return f"x[{e.index - 1}]"
    if isinstance(e, Add):
        return "(" + " + ".join(_code(a) for a in e.args) + ")"
    if isinstance(e, Mul):
        return "(" + " * ".join(_code(a) for a in e.args) + ")"
    if isinstance(e, Sub):
        return f"({_code(e.left)} - {_code(e.right)})"
    if isinstance(e, Neg):
        return f"(-{_code(e.arg)})"
    if isinstance(e, Pow):
        return f"({_code(e.base)} ** {e.exp})"
    if isinstance(e, Div):
        return f"({_code(e.num)} / {_code(e.den)})"
    if isinstance(e, Func):
        return f"_{e.name}({_code(e.arg)})"
    raise TypeError(f"unknown node {type(e).__name__}")  # pragma: no cover


def compile_exprs(exprs: Sequence[Expr]) -> Callable[[Sequence[float]], tuple]:
    """Compile several expressions into one function returning a tuple.

    Evaluation order and rounding match :func:`evaluate` node for node; on a
    zero divisor the slow path re-raises with the offending subexpression.
    """
    body = ", ".join(_code(e) for e in exprs)
    src = f"def _compiled(x):\n    return ({body},)\n"
    scope = {"_sin": math.sin, "_cos": math.cos, "_exp": math.exp}
    exec(compile(src, "<sdfstab-expr>", "exec"), scope)
    fast = scope["_compiled"]
    exprs = tuple(exprs)

    def run(x):
        if type(x) is not list:
            # numpy scalars would turn a zero divisor into inf with a warning
            x = [float(v) for v in x]
        try:
            return fast(x)
        except (ZeroDivisionError, OverflowError):
            return tuple(_eval(e, x) for e in exprs)

    return run


def compile_expr(e: Expr) -> Callable[[Sequence[float]], float]:
    multi = compile_exprs([e])
    return lambda x: multi(x)[0]


# ---------------------------------------------------------------------------
# scalar fields


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A scalar function of ``x1..xn`` given by an expression."""

    dimension: int
    body: Expr

    def __post_init__(self):
        if not isinstance(self.dimension, int) or self.dimension < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dimension!r}")
        top = max_var_index(self.body)
        if top > self.dimension:
            raise ValueError(f"variable x{top} exceeds dimension {self.dimension}")

    def __eq__(self, other):
        if not isinstance(other, ScalarField):
            return NotImplemented
        return self.dimension == other.dimension and self.body == other.body

    def __hash__(self):
        return hash((self.dimension, self.body))

    def __call__(self, x: Sequence[float]) -> float:
        return evaluate(self, x)

    def __str__(self):
        return to_string(self.body)

    def simplified(self) -> "ScalarField":
        return ScalarField(self.dimension, simplify(self.body))

    def is_zero(self) -> bool:
        return not _poly(self.body)

    @property
    def compiled(self) -> Callable[[Sequence[float]], float]:
        fn = self.__dict__.get("_compiled")
        if fn is None:
            fn = compile_expr(self.body)
            object.__setattr__(self, "_compiled", fn)
        return fn

    def __getstate__(self):
        return {"dimension": self.dimension, "body": self.body}

    def __setstate__(self, state):
        object.__setattr__(self, "dimension", state["dimension"])
        object.__setattr__(self, "body", state["body"])


def parse(source: str, dimension: int, names: Mapping[str, object] | None = None) -> ScalarField:
    """Parse ``source`` into a :class:`ScalarField` holding the raw tree.

    >>> str(parse("x3^3", 3).body)
    'x3^3'
    """
    return ScalarField(dimension, parse_expr(source, dimension, names))


def evaluate(field: ScalarField | Expr, x: Sequence[float]) -> float:
    if isinstance(field, ScalarField):
        if len(x) != field.dimension:
            raise ValueError(f"expected a point of length {field.dimension}, got {len(x)}")
        return _eval(field.body, x)
    return _eval(field, x)


def partial(field: ScalarField, i: int) -> ScalarField:
    if not 1 <= i <= field.dimension:
        raise IndexError(f"variable index {i} outside 1..{field.dimension}")
    return ScalarField(field.dimension, partial_expr(field.body, i))


def gradient(field: ScalarField) -> list[ScalarField]:
    return [partial(field, i) for i in range(1, field.dimension + 1)]


def add_all(exprs: Iterable[Expr]) -> Expr:
    p: dict = {}
    for e in exprs:
        p = _p_add(p, _poly(e))
    return _from_poly(p)


def product(a: Expr, b: Expr) -> Expr:
    return _from_poly(_p_mul(_poly(a), _poly(b)))


def scale(a: Expr, s: Number) -> Expr:
    return _from_poly(_p_scale(_poly(a), _to_fraction(s)))


def linear_combination(pairs: Iterable[tuple[Expr, Expr]]) -> Expr:
    """Canonical form of sum(c_k * e_k) for expression pairs (c_k, e_k)."""
    p: dict = {}
    for c, e in pairs:
        p = _p_add(p, _p_mul(_poly(c), _poly(e)))
    return _from_poly(p)


def is_zero(e: Expr) -> bool:
    return not _poly(e)
