import pickle
from fractions import Fraction

import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from daeblock.symbolic import (
    NEG_INF,
    Driver,
    Param,
    ProbeExhaustion,
    Var,
    is_constant,
    is_identically_zero,
    orders_present,
    partial,
    prune,
    sigma_of,
    substitute,
    t,
    tidy,
    total_derivative,
)
from oracles import finite_difference

x1, x2, x3 = (Var(f"x{k}") for k in (1, 2, 3))
h1, h2, h3 = (Driver(f"h{k}") for k in (1, 2, 3))


def d(name, k=1):
    return Var(name, k)


def test_labels():
    assert Var("x1", 0).name == "x1"
    assert Var("x1", 2).name == "x1''"
    assert Var("x1", 4).name == "x1^(4)"
    assert Var("x1", 4).order == 4 and Var("x1", 4).base == "x1"
    assert Driver("h1", 1).name == "h1'(t)"
    assert Driver("h1", 1).shifted().order == 2
    with pytest.raises(ValueError):
        Var("x", -1)


def test_pickle_roundtrip():
    e = d("x1") * Driver("h1", 2) + Param("a")
    assert pickle.loads(pickle.dumps(e)) == e


def test_total_derivative_intro_row():
    e = x1 + x2 + h1
    assert total_derivative(e, 1) == d("x1") + d("x2") + Driver("h1", 1)


def test_total_derivative_constant():
    assert total_derivative(sp.Integer(5), 1) == 0
    assert total_derivative(Param("L") ** 2, 3) == 0


def test_total_derivative_second_order_pendulum():
    x, y, L = Var("x"), Var("y"), Param("L")
    got = total_derivative(x**2 + y**2 - L**2, 2)
    want = 2 * x * Var("x", 2) + 2 * Var("x", 1) ** 2 + 2 * y * Var("y", 2) + 2 * Var("y", 1) ** 2
    assert sp.expand(got - want) == 0


def test_total_derivative_time():
    assert total_derivative(sp.sin(t) * x1, 1) == sp.cos(t) * x1 + sp.sin(t) * d("x1")


def test_total_derivative_negative_order():
    with pytest.raises(ValueError):
        total_derivative(x1, -1)


def test_partial_intro_entry():
    e = (d("x1") + d("x2")) * d("x3") + x1
    assert partial(e, "x3", 1) == d("x1") + d("x2")
    assert partial(x1, "x1", 1) == 0


def test_partial_against_finite_differences(rng):
    c_impl = sp.sin(x3) / (2 - sp.cos(x3) ** 2)
    e = 2 * c_impl * (d("x1") + d("x3")) ** 2
    want = 4 * c_impl * (d("x1") + d("x3"))
    got = partial(e, "x1", 1)
    assert sp.simplify(got - want) == 0
    f = sp.lambdify([x3, d("x1"), d("x3")], e)
    g = sp.lambdify([x3, d("x1"), d("x3")], got)
    for _ in range(3):
        a, b, cc = rng.uniform(-2, 2, 3)
        fd = finite_difference(lambda s: f(a, s, cc), b)
        assert fd == pytest.approx(g(a, b, cc), rel=1e-5)


def test_sigma_of_examples():
    assert sigma_of(x1 + (d("x1") + d("x2")) * d("x3") + h2, "x1") == 1
    assert sigma_of(h3, "x1") == NEG_INF
    v, mu, G = Var("v"), Var("mu"), Param("G")
    assert sigma_of(Var("v", 3) ** 3 + v * mu - G, "v") == 3


def test_sigma_of_hidden_cancellation():
    e = x1 + Var("x1", 2) * (sp.sin(x2) ** 2 + sp.cos(x2) ** 2 - 1)
    assert orders_present(e, "x1") == [2, 0]
    assert sigma_of(e, "x1") == 0


def test_substitute_intro():
    y1 = Var("y1")
    assert substitute(x1 + x2 + h1, ("x1", 0), y1 - x2) == y1 + h1
    e = x1 + x2
    assert substitute(e, ("x9", 0), y1) == e


def test_substitute_exact_rational_points(rng):
    x4, x5, y5 = Var("x4"), Var("x5"), Var("y5")
    got = substitute(x5 - x4, ("x5", 0), y5 + x4)
    for _ in range(5):
        vals = {x4: Fraction(int(rng.integers(-99, 99)), 7), y5: Fraction(int(rng.integers(-99, 99)), 11)}
        subs = {k: sp.Rational(v.numerator, v.denominator) for k, v in vals.items()}
        assert got.xreplace(subs) == subs[y5]


def test_is_identically_zero():
    x = Var("x")
    assert is_identically_zero(x + (-x))
    assert is_identically_zero(sp.sin(x) ** 2 + sp.cos(x) ** 2 - 1)
    assert not is_identically_zero(d("x1") + d("x2"))
    assert is_identically_zero(sp.Integer(0))
    assert not is_identically_zero(sp.Integer(3))


def test_is_identically_zero_relative_scale():
    a = Param("a")
    big = sp.exp(20 * x1)
    assert is_identically_zero((big + a) - big - a)


def test_probe_exhaustion():
    with pytest.raises(ProbeExhaustion):
        is_identically_zero(sp.sqrt(-(x1**2) - 1) - 1)


def test_is_constant():
    assert is_constant(Param("R0") * 3)
    assert not is_constant(x1 * 0 + d("x3"))
    assert not is_constant(h1)
    assert not is_constant(t)


def test_prune_removes_fake_dependence():
    e = x1 + d("x2") * (sp.sin(x3) ** 2 + sp.cos(x3) ** 2 - 1)
    assert prune(e) == x1


def test_tidy_idempotent():
    e = (x1**2 - 1) / (x1 - 1) + x2
    once = tidy(e)
    assert tidy(once) == once


# -- properties ------------------------------------------------------------

names = st.sampled_from(["x1", "x2", "x3"])
leaves = st.one_of(
    st.builds(Var, names, st.integers(0, 2)),
    st.builds(Driver, st.just("h1"), st.integers(0, 1)),
    st.integers(-3, 3).map(sp.Integer),
    st.just(Param("a")),
)


def _combine(children):
    return st.one_of(
        st.tuples(children, children).map(lambda p: p[0] + p[1]),
        st.tuples(children, children).map(lambda p: p[0] * p[1]),
        children.map(sp.sin),
        children.map(sp.cos),
        children.map(lambda e: e**2),
    )


exprs = st.recursive(leaves, _combine, max_leaves=6)


@settings(max_examples=60, deadline=None)
@given(exprs, names)
def test_sigma_shifts_under_differentiation(e, j):
    s = sigma_of(e, j)
    if s != NEG_INF:
        assert sigma_of(total_derivative(e, 1), j) == s + 1


@settings(max_examples=60, deadline=None)
@given(exprs, names, st.integers(0, 3))
def test_nonzero_partial_bounds_sigma(e, j, k):
    p = partial(e, j, k)
    if not is_identically_zero(p):
        assert sigma_of(e, j) >= k


@settings(max_examples=40, deadline=None)
@given(exprs, st.integers(0, 2), st.integers(0, 2))
def test_total_derivative_composes(e, a, b):
    lhs = total_derivative(e, a + b)
    rhs = total_derivative(total_derivative(e, a), b)
    assert is_identically_zero(lhs - rhs)


@settings(max_examples=40, deadline=None)
@given(exprs)
def test_substitute_roundtrip(e):
    y = Var("y9")
    there = substitute(e, ("x1", 1), y - x2)
    back = substitute(there, ("y9", 0), d("x1") + x2)
    assert is_identically_zero(back - e)
