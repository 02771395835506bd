"""Vector fields, Lie brackets and free-Lie-algebra bookkeeping.

Conventions follow the directional-derivative notation ``XY := (DY) X``:

* ``X V`` for a scalar field ``V`` is ``sum_i X_i dV/dx_i``;
* ``[X, Y] = XY - YX`` is the vector field ``(DY) X - (DX) Y``;
* a product ``D1 D2 ... Dk V`` composes right to left, ``D1(D2(...(Dk V)))``.

Bracket words live over the two generators ``F`` (drift) and ``G`` (control
field).  :func:`hall_basis` enumerates a Hall basis of the free Lie algebra
on ``{F, G}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import symexpr as sx
from .symexpr import Expr, ExpressionTooLarge, ScalarField

MAX_NODES = 100_000


@dataclass(frozen=True, eq=False)
class VectorField:
    dimension: int
    components: tuple[Expr, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) != self.dimension:
            raise ValueError(
                f"vector field of dimension {self.dimension} needs {self.dimension} components, "
                f"got {len(comps)}")
        for c in comps:
            if sx.max_var_index(c) > self.dimension:
                raise ValueError(f"component {c} uses a variable beyond x{self.dimension}")
        object.__setattr__(self, "components", comps)

    @classmethod
    def parse(cls, sources: Sequence[str], dimension: int | None = None, names=None) -> "VectorField":
        n = len(sources) if dimension is None else dimension
        return cls(n, tuple(sx.parse_expr(s, n, names) for s in sources))

    @classmethod
    def zero(cls, dimension: int) -> "VectorField":
        return cls(dimension, (sx.ZERO,) * dimension)

    def __eq__(self, other):
        if not isinstance(other, VectorField):
            return NotImplemented
        return self.dimension == other.dimension and all(
            sx.simplify(a) == sx.simplify(b) for a, b in zip(self.components, other.components))

    def __hash__(self):
        return hash((self.dimension, tuple(sx.simplify(c) for c in self.components)))

    def __str__(self):
        return "(" + ", ".join(sx.to_string(c) for c in self.components) + ")"

    def __getitem__(self, i: int) -> Expr:
        return self.components[i]

    def simplified(self) -> "VectorField":
        return VectorField(self.dimension, tuple(sx.simplify(c) for c in self.components))

    def is_zero(self) -> bool:
        return all(sx.is_zero(c) for c in self.components)

    def node_count(self) -> int:
        return sum(sx.count_nodes(c) for c in self.components)

    def __add__(self, other: "VectorField") -> "VectorField":
        _check_dims(self, other)
        return VectorField(self.dimension, tuple(
            sx.add_all((a, b)) for a, b in zip(self.components, other.components)))

    def __sub__(self, other: "VectorField") -> "VectorField":
        return self + other.scaled(-1)

    def scaled(self, s) -> "VectorField":
        return VectorField(self.dimension, tuple(sx.scale(c, s) for c in self.components))

    def times(self, scalar: Expr) -> "VectorField":
        return VectorField(self.dimension, tuple(sx.product(scalar, c) for c in self.components))

    @cached_property
    def _compiled(self):
        return sx.compile_exprs(self.components)

    def __call__(self, x: Sequence[float]) -> np.ndarray:
        if len(x) != self.dimension:
            raise ValueError(f"expected a point of length {self.dimension}, got {len(x)}")
        return np.array(self._compiled(x), dtype=float)

    def __getstate__(self):
        return {"dimension": self.dimension, "components": self.components}

    def __setstate__(self, state):
        object.__setattr__(self, "dimension", state["dimension"])
        object.__setattr__(self, "components", state["components"])


def _check_dims(a, b):
    if a.dimension != b.dimension:
        raise ValueError(f"dimension mismatch: {a.dimension} vs {b.dimension}")


def _check_size(v: VectorField, max_nodes: int) -> VectorField:
    if max_nodes and v.node_count() > max_nodes:
        raise ExpressionTooLarge(
            f"bracket expression has {v.node_count()} nodes, ceiling is {max_nodes}")
    return v


def directional_derivative(X: VectorField, V: ScalarField) -> ScalarField:
    """``XV = sum_i X_i * dV/dx_i``."""
    _check_dims(X, V)
    body = sx.linear_combination(
        (X.components[i - 1], sx.partial_expr(V.body, i)) for i in range(1, X.dimension + 1))
    return ScalarField(X.dimension, body)


def _apply(X: VectorField, e: Expr) -> Expr:
    return sx.linear_combination(
        (X.components[i - 1], sx.partial_expr(e, i)) for i in range(1, X.dimension + 1))


def lie_bracket(X: VectorField, Y: VectorField, *, flip: bool = False,
                max_nodes: int = MAX_NODES) -> VectorField:
    """``[X, Y] = (DY) X - (DX) Y``.

    ``flip=True`` returns the opposite-sign convention; it exists only so the
    verification tooling can demonstrate that a wrong convention is caught.
    """
    _check_dims(X, Y)
    comps = []
    for j in range(X.dimension):
        xy = _apply(X, Y.components[j])
        yx = _apply(Y, X.components[j])
        comps.append(sx.add_all((yx, sx.scale(xy, -1))) if flip else sx.add_all((xy, sx.scale(yx, -1))))
    return _check_size(VectorField(X.dimension, tuple(comps)), max_nodes)


def iterated_bracket(base: VectorField, arm: VectorField, k: int, **kw) -> VectorField:
    """``[[...[[base, arm], arm], ...], arm]`` with ``k`` brackets."""
    if k < 1:
        raise ValueError("k must be >= 1")
    out = base
    for _ in range(k):
        out = lie_bracket(out, arm, **kw)
    return out


# ---------------------------------------------------------------------------
# bracket words


@dataclass(frozen=True)
class BracketWord:
    """Leaf ``F``/``G`` or a bracket ``[left, right]``."""

    letter: str | None = None
    left: "BracketWord | None" = None
    right: "BracketWord | None" = None
    order: int = field(init=False, compare=False)

    def __post_init__(self):
        if self.letter is not None:
            if self.letter not in ("F", "G") or self.left is not None or self.right is not None:
                raise ValueError(f"bad leaf {self.letter!r}")
            order = 1
        else:
            if self.left is None or self.right is None:
                raise ValueError("a bracket needs two operands")
            order = self.left.order + self.right.order
        object.__setattr__(self, "order", order)

    @property
    def is_leaf(self) -> bool:
        return self.letter is not None

    def __str__(self):
        if self.letter is not None:
            return self.letter
        return f"[{self.left},{self.right}]"

    def __repr__(self):
        return f"BracketWord({str(self)!r})"

    def leaves(self) -> int:
        return 1 if self.is_leaf else self.left.leaves() + self.right.leaves()

    @classmethod
    def parse(cls, text: str) -> "BracketWord":
        text = text.replace(" ", "")
        word, rest = _parse_word(text, 0)
        if rest != len(text):
            raise ValueError(f"trailing characters in bracket word {text!r}")
        return word


def _parse_word(s: str, i: int) -> tuple[BracketWord, int]:
    if i >= len(s):
        raise ValueError(f"unexpected end of bracket word {s!r}")
    if s[i] in "FG":
        return BracketWord(s[i]), i + 1
    if s[i] != "[":
        raise ValueError(f"unexpected {s[i]!r} in bracket word {s!r}")
    left, i = _parse_word(s, i + 1)
    if i >= len(s) or s[i] != ",":
        raise ValueError(f"expected ',' in bracket word {s!r}")
    right, i = _parse_word(s, i + 1)
    if i >= len(s) or s[i] != "]":
        raise ValueError(f"expected ']' in bracket word {s!r}")
    return bracket(left, right), i + 1


F = BracketWord("F")
G = BracketWord("G")


def bracket(a: BracketWord, b: BracketWord) -> BracketWord:
    return BracketWord(None, a, b)


def ad_right(base: BracketWord, arm: BracketWord, k: int) -> BracketWord:
    w = base
    for _ in range(k):
        w = bracket(w, arm)
    return w


def hall_basis(max_order: int) -> list[BracketWord]:
    """Hall basis of the free Lie algebra on ``{F, G}`` up to ``max_order``.

    Classical Hall construction: generators ordered ``G < F``, words of higher
    order are greater than words of lower order, and within one order words
    are ordered by creation.  ``[u, v]`` is basic iff ``u, v`` are basic,
    ``u > v`` and, when ``u = [u', u'']``, ``u'' <= v``.
    """
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    basis: list[BracketWord] = [G, F]
    rank = {G: 0, F: 1}
    by_order: dict[int, list[BracketWord]] = {1: [G, F]}
    for n in range(2, max_order + 1):
        level = []
        for p in range(n - 1, 0, -1):
            q = n - p
            for u in by_order[p]:
                for v in by_order[q]:
                    if rank[u] <= rank[v]:
                        continue
                    if not u.is_leaf and rank[u.right] > rank[v]:
                        continue
                    level.append(bracket(u, v))
        for w in level:
            rank[w] = len(basis)
            basis.append(w)
        by_order[n] = level
    return basis


@dataclass(frozen=True)
class OperatorProduct:
    """Ordered product ``D1 D2 ... Dk`` of bracket words."""

    factors: tuple[BracketWord, ...]

    def __post_init__(self):
        if not self.factors:
            raise ValueError("an operator product needs at least one factor")
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def order(self) -> int:
        return sum(w.order for w in self.factors)

    def __str__(self):
        return "(" + ",".join(str(w) for w in self.factors) + ")"


def realize(word: BracketWord, f: VectorField, g: VectorField, *, cache: dict | None = None,
            flip: bool = False, max_nodes: int = MAX_NODES) -> VectorField:
    """Substitute ``F -> f``, ``G -> g`` and evaluate the bracket tree."""
    if cache is not None and word in cache:
        return cache[word]
    if word.is_leaf:
        out = f if word.letter == "F" else g
    else:
        a = realize(word.left, f, g, cache=cache, flip=flip, max_nodes=max_nodes)
        b = realize(word.right, f, g, cache=cache, flip=flip, max_nodes=max_nodes)
        out = lie_bracket(a, b, flip=flip, max_nodes=max_nodes)
    if cache is not None:
        cache[word] = out
    return out


def apply_product(prod: OperatorProduct | Iterable[BracketWord], f: VectorField, g: VectorField,
                  V: ScalarField, *, cache: dict | None = None) -> ScalarField:
    factors = prod.factors if isinstance(prod, OperatorProduct) else tuple(prod)
    out = V
    for w in reversed(factors):
        out = directional_derivative(realize(w, f, g, cache=cache), out)
    return out
