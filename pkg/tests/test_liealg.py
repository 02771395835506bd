import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdfstab import symexpr as sx
from sdfstab.liealg import (F, G, BracketWord, OperatorProduct, VectorField, ad_right, apply_product,
                            bracket, directional_derivative, hall_basis, iterated_bracket,
                            lie_bracket, realize)
from sdfstab.symexpr import ExpressionTooLarge
from sdfstab.systems import corollary2

from oracles import flow_commutator, numeric_bracket, template_fields, witt_dimension
from strategies import points, vector_fields


@pytest.fixture(scope="module")
def c2():
    return corollary2(3)


def vf(*comps, n=None):
    return VectorField.parse(comps, n)


class TestBracketExamples:
    def test_template_brackets(self, c2):
        fg = lie_bracket(c2.f, c2.g)
        assert str(fg) == "((-3)*x3^2, (-1), 0)"
        assert str(iterated_bracket(c2.f, c2.g, 3)) == "((-6), 0, 0)"
        assert lie_bracket(c2.f, fg).is_zero()

    def test_constant_fields_commute(self):
        assert lie_bracket(vf("1", "0"), vf("0", "1")).is_zero()

    def test_linear_fields(self):
        # [Ax, Bx] = (BA - AB) x under (DY)X - (DX)Y
        X, Y = vf("x2", "0"), vf("0", "x1")
        assert str(lie_bracket(X, Y)) == "((-1)*x1, x2)"

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            lie_bracket(vf("x1", "x2"), vf("x1", "x2", "x3"))

    def test_node_ceiling(self, c2):
        with pytest.raises(ExpressionTooLarge):
            lie_bracket(c2.f, c2.g, max_nodes=3)

    def test_matches_finite_difference_bracket(self):
        f, g, _ = template_fields(3, a=lambda x: 2 + np.sin(x[0]), b=lambda x: 1 + x[1] ** 2)
        sysd = corollary2(3, "2 + sin(x1)", "1 + x2^2")
        fg = lie_bracket(sysd.f, sysd.g)
        rng = np.random.default_rng(3)
        for x in rng.uniform(-1, 1, size=(20, 3)):
            assert np.allclose(fg(x), numeric_bracket(f, g, x), atol=1e-6)


class TestApplyProduct:
    def test_single_factor_is_directional_derivative(self, c2):
        out = apply_product(OperatorProduct((F,)), c2.f, c2.g, c2.V)
        assert out.body == directional_derivative(c2.f, c2.V).body

    def test_ff(self, c2):
        out = apply_product(OperatorProduct((F, F)), c2.f, c2.g, c2.V)
        assert sx.to_string(out.body) == "x3^6 + 3*x2^2*x3^2"

    def test_fg_at_point(self, c2):
        out = apply_product(OperatorProduct((bracket(F, G),)), c2.f, c2.g, c2.V)
        assert out.compiled([1.0, 1.0, 0.0]) == -1.0

    def test_right_to_left(self, c2):
        # (G, F) V = g(fV) differs from (F, G) V = f(gV)
        gf = apply_product([G, F], c2.f, c2.g, c2.V).compiled([1.0, 1.0, 1.0])
        fg = apply_product([F, G], c2.f, c2.g, c2.V).compiled([1.0, 1.0, 1.0])
        assert gf == 4.0 and fg == 0.0

    def test_empty_product_rejected(self):
        with pytest.raises(ValueError):
            OperatorProduct(())


class TestHall:
    def test_small_bases(self):
        assert [str(w) for w in hall_basis(2)] == ["G", "F", "[F,G]"]
        order3 = {str(w) for w in hall_basis(3) if w.order == 3}
        assert order3 == {"[[F,G],G]", "[[F,G],F]"}

    def test_counts_match_witt(self):
        basis = hall_basis(8)
        for k in range(1, 9):
            assert sum(w.order == k for w in basis) == witt_dimension(k)

    def test_order_is_leaf_count(self):
        for w in hall_basis(8):
            assert w.order == w.leaves()

    def test_deterministic_and_distinct(self):
        a, b = hall_basis(6), hall_basis(6)
        assert a == b and len(set(a)) == len(a)

    def test_order3_words_are_independent(self):
        # realized on a generic pair of fields the order-3 words are linearly independent
        f = vf("x2^2", "x3", "x1*x2")
        g = vf("1", "x1", "x3^2")
        pts = np.random.default_rng(1).uniform(-1, 1, size=(6, 3))
        words = [w for w in hall_basis(3) if w.order == 3]
        M = np.hstack([np.concatenate([realize(w, f, g)(p) for p in pts])[:, None] for w in words])
        assert np.linalg.matrix_rank(M) == len(words)

    def test_runtime(self):
        t = time.perf_counter()
        hall_basis(8)
        assert time.perf_counter() - t < 1.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            hall_basis(0)


class TestWords:
    @pytest.mark.parametrize("text", ["F", "[F,G]", "[[F,G],G]", "[[F,G],[F,[F,G]]]"])
    def test_parse_print(self, text):
        assert str(BracketWord.parse(text)) == text

    @pytest.mark.parametrize("text", ["", "[F,G", "H", "[F,G]]", "[F;G]"])
    def test_parse_errors(self, text):
        with pytest.raises(ValueError):
            BracketWord.parse(text)

    def test_ad_right(self):
        assert str(ad_right(F, G, 3)) == "[[[F,G],G],G]"


# ---------------------------------------------------------------------------
# algebraic identities on random polynomial fields

pairs = st.tuples(vector_fields, vector_fields)


@settings(max_examples=40, deadline=None)
@given(pairs, st.lists(points, min_size=5, max_size=5))
def test_antisymmetry(p, pts):
    X, Y = p
    s = lie_bracket(X, Y) + lie_bracket(Y, X)
    for x in pts:
        assert np.max(np.abs(s(x))) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.tuples(vector_fields, vector_fields, vector_fields), st.lists(points, min_size=5, max_size=5))
def test_jacobi(t, pts):
    X, Y, Z = t
    J = (lie_bracket(X, lie_bracket(Y, Z)) + lie_bracket(Y, lie_bracket(Z, X))
         + lie_bracket(Z, lie_bracket(X, Y)))
    assert J.is_zero()
    for x in pts:
        assert np.max(np.abs(J(x))) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(pairs, st.sampled_from(["x1^2 + x2*x3", "sin(x1)*x3", "x1^2/2 + x2^4/4 + x3^2/2"]),
       st.lists(points, min_size=5, max_size=5))
def test_leibniz_link(p, vsrc, pts):
    X, Y = p
    V = sx.parse(vsrc, 3)
    lhs = directional_derivative(lie_bracket(X, Y), V)
    rhs1 = directional_derivative(X, directional_derivative(Y, V))
    rhs2 = directional_derivative(Y, directional_derivative(X, V))
    for x in pts:
        assert abs(lhs.compiled(x) - (rhs1.compiled(x) - rhs2.compiled(x))) <= 1e-9


def test_flow_commutator_sign_on_linear_example():
    # X = e1, Y = x1 e2: the four-flow loop moves x2 by +t^2 and [X,Y] = e2
    X, Y = vf("1", "0"), vf("0", "x1")
    xy = lie_bracket(X, Y)
    assert np.allclose(xy([0.3, 0.7]), [0.0, 1.0])
    x = np.array([0.3, 0.7])
    t = 1e-2
    moved = flow_commutator(X, Y, x, t)
    assert np.allclose((moved - x) / t ** 2, xy(x), atol=1e-9)


FLOW_SYSTEMS = [
    (("x2", "-x1", "0"), ("0", "0", "1")),
    (("x3^3", "x3", "0"), ("0", "0", "1")),
    (("sin(x2)", "x1*x3", "x1"), ("x2^2", "1", "cos(x1)")),
]


@pytest.mark.parametrize("fx,gx", FLOW_SYSTEMS)
@pytest.mark.parametrize("t", [1e-2, 1e-3])
def test_flow_commutator(fx, gx, t):
    X, Y = vf(*fx), vf(*gx)
    xy = lie_bracket(X, Y)
    for x in np.random.default_rng(7).uniform(-1, 1, size=(10, 3)):
        moved = flow_commutator(X, Y, x, t)
        assert np.max(np.abs(moved - x - t ** 2 * xy(x))) <= 10 * t ** 3
