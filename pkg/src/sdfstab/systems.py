"""System definitions ``x' = f(x) + u g(x)`` with a candidate Lyapunov function.

Also hosts the built-in three-dimensional template

    x1' = a(x) x3^L,   x2' = b(x) x3,   x3' = u,
    V   = x1^2/2 + x2^(L+1)/(L+1) + x3^2/2,

and the closed-form bracket identities used to regression-test the Lie
engine against it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import symexpr as sx
from .liealg import (F, G, MAX_NODES, BracketWord, OperatorProduct, VectorField, ad_right,
                     directional_derivative, hall_basis, realize)
from .symexpr import Expr, ScalarField


_FG = BracketWord(None, F, G)


class ConfigError(ValueError):
    """Invalid system or scenario definition."""


def default_zero_tol(x: Sequence[float]) -> float:
    return 1e-9 * (1.0 + float(np.linalg.norm(x)))


class LieEngine:
    """Lazily computed and cached symbolic quantities for one ``(f, g, V)``."""

    def __init__(self, f: VectorField, g: VectorField, V: ScalarField, max_nodes: int = MAX_NODES,
                 flip: bool = False):
        self.f, self.g, self.V = f, g, V
        self.max_nodes = max_nodes
        self.flip = flip
        self._words: dict[BracketWord, VectorField] = {}
        self._fpow: list[ScalarField] = [V]
        self._adg: dict[int, ScalarField] = {}
        self._adf: dict[int, ScalarField] = {}
        self._levels: list[list[tuple[OperatorProduct, ScalarField]]] = []
        self._seen: set = set()
        self._hall: dict[int, list[BracketWord]] = {}
        self._gV: ScalarField | None = None

    def realize(self, word: BracketWord) -> VectorField:
        return realize(word, self.f, self.g, cache=self._words, flip=self.flip,
                       max_nodes=self.max_nodes)

    @property
    def gV(self) -> ScalarField:
        if self._gV is None:
            self._gV = directional_derivative(self.g, self.V)
        return self._gV

    def f_power(self, i: int) -> ScalarField:
        """``f^i V``; ``f_power(0)`` is ``V`` itself."""
        while len(self._fpow) <= i:
            self._fpow.append(directional_derivative(self.f, self._fpow[-1]))
        return self._fpow[i]

    def ad_g_value(self, k: int) -> ScalarField:
        """``([[...[f,g],g],...,g] V)`` with ``k`` copies of ``g``."""
        if k not in self._adg:
            self._adg[k] = directional_derivative(self.realize(ad_right(F, G, k)), self.V)
        return self._adg[k]

    def ad_f_value(self, k: int) -> ScalarField:
        """``([[...[g,f],f],...,f] V)`` with ``k`` copies of ``f``."""
        if k not in self._adf:
            self._adf[k] = directional_derivative(self.realize(ad_right(G, F, k)), self.V)
        return self._adf[k]

    def _hall_words(self, order: int) -> list[BracketWord]:
        if order not in self._hall:
            words = [w for w in hall_basis(order) if w.order == order and w != G]
            self._hall[order] = words
        return self._hall[order]

    def products(self, order: int) -> list[tuple[OperatorProduct, ScalarField]]:
        """Distinct nonzero fields ``D1...Dk V`` of exactly the given total order.

        The ``Di`` range over Hall words other than the bare ``G``.  Entries
        whose canonical field already appeared at this or a lower order are
        dropped, as are identically zero fields (their extensions vanish too).
        """
        while len(self._levels) < order:
            n = len(self._levels) + 1
            level = []
            for j in range(1, n + 1):
                prev = [(None, self.V)] if j == n else self._levels[n - j - 1]
                for w in self._hall_words(j):
                    X = self.realize(w)
                    if X.is_zero():
                        continue
                    for prod, fld in prev:
                        new = directional_derivative(X, fld)
                        if new.is_zero() or new.body in self._seen:
                            continue
                        self._seen.add(new.body)
                        factors = (w,) if prod is None else (w,) + prod.factors
                        level.append((OperatorProduct(factors), new))
            self._levels.append(level)
        return self._levels[order - 1]


@dataclass(eq=False)
class SystemDef:
    """Affine single-input system with a candidate control Lyapunov function."""

    f: VectorField
    g: VectorField
    V: ScalarField
    eps0: float | None = None
    n_max: int = 7
    strict: bool = True
    name: str = "custom"
    params: dict = field(default_factory=dict)
    max_nodes: int = MAX_NODES

    def __post_init__(self):
        n = self.f.dimension
        if self.g.dimension != n or self.V.dimension != n:
            raise ConfigError(
                f"dimension mismatch: f has {n}, g has {self.g.dimension}, V has {self.V.dimension}")
        if self.n_max < 1:
            raise ConfigError("n_max must be >= 1")
        if self.eps0 is not None and not self.eps0 > 0:
            raise ConfigError("eps0 must be positive")
        origin = [0.0] * n
        f0 = self.f(origin)
        if np.max(np.abs(f0)) > (self.eps0 or 1e-9):
            raise ConfigError(f"f(0) = {f0.tolist()} is not zero")
        v0 = sx.evaluate(self.V, origin)
        if abs(v0) > (self.eps0 or 1e-9):
            raise ConfigError(f"V(0) = {v0} is not zero")
        if self.strict:
            bad = self.positive_definiteness_violations()
            if bad:
                raise ConfigError(f"V is not positive on the unit sphere, e.g. at {bad[0]}")

    @property
    def dimension(self) -> int:
        return self.f.dimension

    def positive_definiteness_violations(self, samples: int = 256, seed: int = 12345,
                                         radii: Sequence[float] = (0.1, 1.0, 3.0)) -> list[list[float]]:
        rng = np.random.default_rng(seed)
        bad = []
        for r in radii:
            pts = rng.normal(size=(samples, self.dimension))
            pts *= r / np.linalg.norm(pts, axis=1, keepdims=True)
            for p in pts:
                if not self.V.compiled(p) > 0:
                    bad.append(p.tolist())
        return bad

    def zero_tol(self, x: Sequence[float]) -> float:
        return self.eps0 if self.eps0 is not None else default_zero_tol(x)

    @property
    def engine(self) -> LieEngine:
        eng = self.__dict__.get("_engine")
        if eng is None:
            eng = LieEngine(self.f, self.g, self.V, self.max_nodes)
            self.__dict__["_engine"] = eng
        return eng

    @property
    def rhs(self) -> Callable[[Sequence[float], float], list]:
        fn = self.__dict__.get("_rhs")
        if fn is None:
            n = self.dimension
            both = sx.compile_exprs(self.f.components + self.g.components)

            def fn(x, u, _both=both, _n=n):
                v = _both(x)
                return [v[i] + u * v[_n + i] for i in range(_n)]

            self.__dict__["_rhs"] = fn
        return fn

    def V_value(self, x: Sequence[float]) -> float:
        return self.V.compiled(x)

    def __getstate__(self):
        state = dict(self.__dict__)
        for k in ("_engine", "_rhs"):
            state.pop(k, None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "dimension": self.dimension,
            "f": [sx.to_string(c) for c in self.f.components],
            "g": [sx.to_string(c) for c in self.g.components],
            "V": sx.to_string(self.V.body),
            "params": {k: str(v) for k, v in self.params.items()},
        }


# ---------------------------------------------------------------------------
# built-in template


def _as_expr(value, n: int = 3) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, Fraction)):
        return sx.Const(value)
    return sx.parse_expr(str(value), n)


def check_template_exponent(L) -> int:
    if isinstance(L, bool) or not isinstance(L, (int, Fraction)) and not (
            isinstance(L, float) and L.is_integer()):
        raise ConfigError(f"L must be an odd integer >= 3, got {L!r}")
    L = int(L)
    if L < 3 or L % 2 == 0:
        raise ConfigError(f"L must be an odd integer >= 3, got {L}")
    return L


def corollary2(L: int = 3, a="1", b="1", *, check_L: bool = True, **kw) -> SystemDef:
    """The template system with exponent ``L`` and coefficient functions ``a``, ``b``."""
    if check_L:
        L = check_template_exponent(L)
    a_e, b_e = _as_expr(a), _as_expr(b)
    x1, x2, x3 = sx.Var(1), sx.Var(2), sx.Var(3)
    f = VectorField(3, (sx.simplify(a_e * x3 ** L), sx.simplify(b_e * x3), sx.ZERO))
    g = VectorField(3, (sx.ZERO, sx.ZERO, sx.ONE))
    V = ScalarField(3, sx.simplify(
        sx.Const(Fraction(1, 2)) * x1 ** 2 + sx.Const(Fraction(1, L + 1)) * x2 ** (L + 1)
        + sx.Const(Fraction(1, 2)) * x3 ** 2))
    params = {"L": L, "a": sx.to_string(a_e), "b": sx.to_string(b_e)}
    kw.setdefault("name", "corollary2")
    return SystemDef(f, g, V, params=params, **kw)


@dataclass
class ClosedForms:
    """Hand-derived identities for the template system, as numeric callables."""

    L: int
    a: ScalarField
    b: ScalarField

    def __post_init__(self):
        self._a = self.a.compiled
        self._b = self.b.compiled
        self._da3 = sx.partial(self.a, 3).compiled
        self._db3 = sx.partial(self.b, 3).compiled
        self._db3k = {}

    def gV(self, x):
        return x[2]

    def fg(self, x):
        L = self.L
        x1, x2, x3 = x
        return np.array([
            -self._da3(x) * x3 ** L - L * self._a(x) * x3 ** (L - 1),
            -self._db3(x) * x3 - self._b(x),
            0.0,
        ])

    def fgV(self, x):
        L = self.L
        x1, x2, x3 = x
        return (-self._da3(x) * x1 * x3 ** L - L * self._a(x) * x1 * x3 ** (L - 1)
                - self._db3(x) * x2 ** L * x3 - self._b(x) * x2 ** L)

    def _b_x3_derivative(self, order: int):
        if order not in self._db3k:
            d = self.b
            for _ in range(order):
                d = sx.partial(d, 3)
            self._db3k[order] = d.compiled
        return self._db3k[order]

    def ad_g_on_plane(self, k: int, x):
        """k-fold ``[[f,g],...,g]`` at a point with ``x3 = 0`` (hidden terms vanish there)."""
        assert x[2] == 0.0
        L = self.L
        first = 0.0
        if k == L:
            first = (-1) ** k * math.prod(L - i for i in range(k)) * self._a(x)
        second = (-1) ** k * k * self._b_x3_derivative(k - 1)(x)
        return np.array([first, second, 0.0])

    def ad_f_on_plane(self, k: int, x):
        """k-fold ``[[g,f],...,f]`` at a point with ``x3 = 0``: identically zero there."""
        assert x[2] == 0.0
        return np.zeros(3)


@dataclass
class VerifyReport:
    passed: bool
    checks: int
    max_abs_diff: float
    mismatches: list = field(default_factory=list)

    def first_mismatch(self):
        return self.mismatches[0] if self.mismatches else None


def verify_template(L: int = 3, a="1", b="1", *, points: int = 100, seed: int = 0,
                    tol: float = 1e-8, flip: bool = False, box: float = 2.0,
                    max_k: int | None = None) -> VerifyReport:
    """Compare the symbolic engine with the closed forms at random points.

    Checks ``gV``, ``[f,g]`` and ``[f,g]V`` everywhere, and the iterated
    brackets ``ad_g^k f``, ``ad_f^k g`` for ``2 <= k <= L`` on the plane
    ``x3 = 0`` where their unnamed remainder terms vanish.
    """
    L = check_template_exponent(L)
    sys = corollary2(L, a, b)
    eng = LieEngine(sys.f, sys.g, sys.V, flip=flip)
    cf = ClosedForms(L, ScalarField(3, _as_expr(a)), ScalarField(3, _as_expr(b)))
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-box, box, size=(points, 3))
    fg = eng.realize(_FG)
    fgV = directional_derivative(fg, sys.V)
    gV = eng.gV
    max_k = L if max_k is None else max_k
    adg = {k: eng.realize(ad_right(F, G, k)) for k in range(2, max_k + 1)}
    adf = {k: eng.realize(ad_right(G, F, k)) for k in range(2, max_k + 1)}

    mismatches = []
    worst = 0.0
    checks = 0

    def compare(label, got, want, x):
        nonlocal worst, checks
        checks += 1
        d = float(np.max(np.abs(np.asarray(got, dtype=float) - np.asarray(want, dtype=float))))
        worst = max(worst, d)
        if not d <= tol:
            mismatches.append({"quantity": label, "x": list(map(float, x)),
                               "symbolic": np.asarray(got, dtype=float).tolist(),
                               "closed_form": np.asarray(want, dtype=float).tolist(), "diff": d})

    for x in pts:
        compare("gV", gV.compiled(x), cf.gV(x), x)
        compare("[f,g]", fg(x), cf.fg(x), x)
        compare("[f,g]V", fgV.compiled(x), cf.fgV(x), x)
        xp = np.array([x[0], x[1], 0.0])
        for k in range(2, max_k + 1):
            compare(f"ad_g^{k} f", adg[k](xp), cf.ad_g_on_plane(k, xp), xp)
            compare(f"ad_f^{k} g", adf[k](xp), cf.ad_f_on_plane(k, xp), xp)
    return VerifyReport(not mismatches, checks, worst, mismatches)

