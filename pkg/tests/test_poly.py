import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from logsing import (
    IDENTICALLY_ZERO,
    DimensionMismatch,
    PolynomialSyntaxError,
    PreconditionError,
    SparsePolynomial,
    evaluate,
    gradient,
    parse_polynomial,
    restrict_to_ray,
    vanishing_order,
)
from logsing.poly import UnivariateRestriction, neumaier_sum

P = SparsePolynomial.parse


# -- evaluation ---------------------------------------------------------------------
@pytest.mark.parametrize(
    "text, point, expected",
    [("x1*x2", (2, 3), 6.0), ("x1^2 + x2^4", (0, 0), 0.0), ("x1^2 + x2^2", (0.5, 0.5), 0.5)],
)
def test_eval_examples(text, point, expected):
    assert evaluate(P(text, 2), point) == expected


def test_eval_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        evaluate(P("x1*x2"), (1.0, 2.0, 3.0))


def test_vectorized_matches_pointwise():
    f = P("3*x1^3*x2 - x2^5 + 1/3*x1 - 2", 2)
    X = np.random.default_rng(0).uniform(-2, 2, (50, 2))
    vec = f.evaluate(X)
    for x, v in zip(X, vec):
        direct = 3 * x[0] ** 3 * x[1] - x[1] ** 5 + x[0] / 3 - 2
        assert v == pytest.approx(direct, rel=1e-13, abs=1e-13)


def test_compensated_sum_cancellation():
    parts = [np.array([1e16]), np.array([1.0]), np.array([-1e16])]
    assert neumaier_sum(parts)[0] == 1.0
    f = P("x1^2 - x2^2 + 1", 2)
    assert f((1e8, 1e8)) == 1.0


# -- structure ----------------------------------------------------------------------
def test_no_zero_or_duplicate_terms():
    f = P("x1*x2 + x2*x1 - 2*x1*x2 + x1", 2)
    assert f.terms == {(1, 0): 1}
    g = SparsePolynomial(2, {(1, 1): 0.0, (2, 0): 1.5})
    assert g.terms == {(2, 0): 1.5}


def test_degree_and_order():
    f = P("x1^2 + x2^4", 2)
    assert f.degree == 4 and f.order == 2
    assert f.degree_in(0) == 2 and f.degree_in(1) == 4


def test_example_family():
    f = SparsePolynomial.example_family([1, 2])
    assert f == P("x1^2 + x2^4", 2)
    assert SparsePolynomial.example_family([1, 1, 1]) == P("x1^2 + x2^2 + x3^2", 3)


# -- gradient -----------------------------------------------------------------------
def test_gradient_examples():
    assert gradient(P("x1^2 + x2^2")) == (P("2*x1", 2), P("2*x2", 2))
    assert gradient(P("x1*x2")) == (P("x2", 2), P("x1", 2))
    g = gradient(SparsePolynomial.constant(5, 3))
    assert len(g) == 3 and all(c.is_zero for c in g)


exps = st.tuples(st.integers(0, 4), st.integers(0, 4), st.integers(0, 3))
coefs = st.floats(-3, 3, allow_nan=False).filter(lambda c: abs(c) > 1e-3)
polys = st.dictionaries(exps, coefs, min_size=1, max_size=6).map(lambda t: SparsePolynomial(3, t))
points = st.tuples(*[st.floats(-1.5, 1.5, allow_nan=False)] * 3)


@given(polys, points)
def test_gradient_matches_central_differences(f, x):
    x = np.array(x)
    h = 1e-5
    for i, gi in enumerate(gradient(f)):
        e = np.zeros(3)
        e[i] = h
        fd = (f(x + e) - f(x - e)) / (2 * h)
        scale = max(1.0, sum(abs(c) for _, c in f.items()) * 1.5**f.degree)
        assert abs(gi(x) - fd) <= 1e-6 * scale


@given(polys, points)
def test_value_and_gradient_consistent(f, x):
    v, g = f.value_and_gradient(np.array([x]))
    assert v[0] == f(x)
    assert np.allclose(g[0], [gi(x) for gi in f.gradient()], rtol=1e-12, atol=1e-12)


# -- rays ---------------------------------------------------------------------------
def test_ray_examples():
    assert restrict_to_ray(P("x1^2 + x2^2"), (1, 0)).coeffs == (0, 0, 1)
    s = 1 / math.sqrt(2)
    phi = restrict_to_ray(P("x1*x2"), (s, s))
    assert phi.coeffs[:2] == (0.0, 0.0) and phi.coeffs[2] == pytest.approx(0.5, rel=1e-15)
    assert restrict_to_ray(P("x1^2 + x2^4"), (0, 1)).coeffs == (0, 0, 0, 0, 1)


def test_ray_rejects_bad_directions():
    with pytest.raises(PreconditionError):
        restrict_to_ray(P("x1*x2"), (0.0, 0.0))
    with pytest.raises(PreconditionError):
        restrict_to_ray(P("x1*x2"), (1.0, 1.0))
    with pytest.raises(DimensionMismatch):
        restrict_to_ray(P("x1*x2"), (1.0,))


def unit_vectors(n):
    return st.lists(st.floats(-1, 1, allow_nan=False), min_size=n, max_size=n).filter(
        lambda v: np.linalg.norm(v) > 0.1
    ).map(lambda v: tuple(float(c) for c in np.array(v) / math.sqrt(math.fsum(c * c for c in v))))


@given(polys, unit_vectors(3), st.floats(-1, 1, allow_nan=False))
def test_ray_restriction_matches_evaluation(f, w, rho):
    phi = restrict_to_ray(f, w)
    assert phi.degree <= f.degree
    assert phi(0.0) == pytest.approx(f((0.0, 0.0, 0.0)), abs=1e-15)
    direct = f(tuple(rho * np.array(w)))
    scale = max(1.0, sum(abs(c) for _, c in f.items()))
    assert abs(phi(rho) - direct) <= 1e-12 * scale


@given(st.lists(st.integers(1, 3), min_size=1, max_size=3), unit_vectors(3))
def test_ray_order_bounds_example_family(half, w):
    f = SparsePolynomial.example_family(half, 3)
    order = vanishing_order(restrict_to_ray(f, w))
    if any(abs(wi) > 1e-50 for wi in w[: len(half)]):
        assert order is not IDENTICALLY_ZERO
    if order is not IDENTICALLY_ZERO:
        assert order >= f.order


def test_generic_ray_attains_order():
    f = SparsePolynomial.example_family([1, 2, 3])
    w = np.array([0.3, -0.5, 0.7])
    w /= np.linalg.norm(w)
    assert vanishing_order(restrict_to_ray(f, tuple(w))) == f.order == 2


def test_vanishing_order_examples():
    assert vanishing_order(UnivariateRestriction((0, 0, 1), (1.0,))) == 2
    assert vanishing_order(UnivariateRestriction((0, 0, 0, 0, 0, 3, 0, 1), (1.0,))) == 5
    assert vanishing_order(UnivariateRestriction((0, 0, 0), (1.0,))) is IDENTICALLY_ZERO
    assert vanishing_order(UnivariateRestriction((1e-20, 0.0, 1.0), (1.0,))) == 2


def test_exact_rational_ray():
    f = P("x1*x2 + 1/2*x1^2", 2)
    phi = restrict_to_ray(f, (Fraction(3, 5), Fraction(4, 5)))
    assert phi.coeffs == (0, 0, Fraction(12, 25) + Fraction(9, 50))


def test_log_derivative_is_n_over_rho_for_monomial():
    phi = restrict_to_ray(P("x1^2 + x2^2"), (1, 0))
    rho = np.array([1e-200, 1e-5, 0.5])
    assert np.allclose(phi.log_derivative(rho) * rho, 2.0)


# -- text format ----------------------------------------------------------------------
def test_parse_grammar():
    assert P("2*x1**3 - x2 + 0.5") == SparsePolynomial(2, {(3, 0): 2, (0, 1): -1, (0, 0): 0.5})
    assert P("-x1^2*x3", 3).num_vars == 3
    assert P("x3").num_vars == 3
    assert P(" 3/4 * x1 ").terms == {(1,): Fraction(3, 4)}


@pytest.mark.parametrize("bad", ["", "x1 +", "x0", "x1^-2", "2**x1", "x1^1.5", "y1", "x1 x2", "1/0"])
def test_parse_errors(bad):
    with pytest.raises(PolynomialSyntaxError):
        parse_polynomial(bad)


def test_parse_rejects_too_few_vars():
    with pytest.raises(PolynomialSyntaxError):
        parse_polynomial("x3", 2)


@given(polys)
def test_text_round_trip(f):
    assert P(f.to_text(), 3) == f


# -- interval bounds ---------------------------------------------------------------------
@given(polys, points, st.floats(1e-6, 0.5))
def test_abs_bounds_enclose_values(f, c, r):
    lo = np.array(c) - r
    hi = np.array(c) + r
    lb, ub = f.abs_bounds(lo[None, :], hi[None, :])
    X = np.random.default_rng(0).uniform(lo, hi, (64, 3))
    vals = np.abs(f.evaluate(X))
    assert np.all(vals >= lb[0] * (1 - 1e-12) - 1e-300)
    assert np.all(vals <= ub[0] * (1 + 1e-12) + 1e-300)
