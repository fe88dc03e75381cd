import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from logsing import (
    BadBracket,
    Budget,
    DegenerateRay,
    FunctionVanishes,
    Kind,
    PreconditionError,
    Region,
    SparsePolynomial,
    critical_exponent,
    integrate_abs_log,
    integrate_grad_log,
    radial_blowup_check,
    shell_decompose,
)
from logsing.quadrature import sample_shells, shell_index

P = SparsePolynomial.parse
SMALL = Budget(samples_per_shell=2**15)


def test_shell_index_is_exact_at_dyadic_edges():
    v = np.array([1.0, 0.75, 0.5, np.nextafter(0.5, 1), 2.0**-30, 3.0, 4.0])
    assert shell_index(v).tolist() == [0, 0, 1, 0, 30, -2, -2]


def test_annulus_measures():
    prof = shell_decompose(P("x1^2 + x2^2"), j_max=12, samples_per_shell=2**15)
    for j in range(0, 10):
        exact = math.pi * 2.0 ** -(j + 1)
        assert prof.measure(j) == pytest.approx(exact, rel=0.02)


def test_hyperbolic_shell_area_matches_quadrature():
    # |{1/2 < |x1 x2| <= 1}| in [-1,1]^2, computed independently
    inner, _ = integrate.quad(lambda x: 1.0 - 0.5 / x, 0.5, 1.0)
    exact = 4 * inner
    assert exact == pytest.approx(2 * (1 - math.log(2)), rel=1e-12)
    prof = shell_decompose(P("x1*x2"), samples_per_shell=2**15)
    assert prof.measure(0) == pytest.approx(exact, rel=0.02)


def test_measures_add_up_to_region_volume():
    prof = shell_decompose(P("x1*x2 - x2^3"), Region.cube(2, 1.5), samples_per_shell=2**15)
    total = sum(prof.measures) + prof.beyond_volume
    assert total == pytest.approx(9.0, rel=0.02)


def test_disk_value_matches_closed_form():
    sector, _ = integrate.quad(lambda t: 1.0 / math.cos(t), 0.0, math.pi / 4)
    exact = 2 * 8 * sector  # |grad log r^2| = 2/r, eight octants of the square
    v = integrate_grad_log(P("x1^2 + x2^2"), 1.0)
    assert v.kind is Kind.CONVERGENT
    assert abs(v.value - exact) <= max(v.error_bar, 0.01 * exact)


def test_one_dimensional_log_integral():
    v = integrate_abs_log(P("x1"), 1.0)
    assert v.kind is Kind.CONVERGENT
    assert v.value == pytest.approx(2.0, rel=0.02)


@pytest.mark.parametrize("p, exact", [(1.0, 8.0), (2.0, 24.0)])
def test_log_lp_of_product(p, exact):
    # int_{[0,1]^2} (-ln x - ln y)^p: 2 for p=1, 6 for p=2; four quadrants
    v = integrate_abs_log(P("x1*x2"), p)
    assert v.kind is Kind.CONVERGENT
    assert v.value == pytest.approx(exact, rel=0.02)


@pytest.mark.parametrize("p, kind", [(0.9, Kind.CONVERGENT), (1.0, Kind.DIVERGENT), (1.1, Kind.DIVERGENT)])
def test_product_threshold(p, kind):
    assert integrate_grad_log(P("x1*x2"), p, budget=SMALL).kind is kind


def test_bounded_integrand_is_convergent():
    v = integrate_grad_log(P("x1^2 + 1", 1), 2.0, budget=SMALL)
    assert v.kind is Kind.CONVERGENT
    exact, _ = integrate.quad(lambda x: (2 * abs(x) / (x * x + 1)) ** 2, -1, 1)
    # no zeros means no refinement, so only the coarse boxes are sampled
    assert abs(v.value - exact) <= v.error_bar


def test_zero_polynomial_rejected():
    with pytest.raises(FunctionVanishes):
        integrate_grad_log(SparsePolynomial(2, {}), 1.0)


def test_bad_parameters():
    with pytest.raises(PreconditionError):
        integrate_grad_log(P("x1*x2"), 0.0)
    with pytest.raises(PreconditionError):
        Budget(j_max=3)
    with pytest.raises(PreconditionError):
        integrate_grad_log(P("x1*x2"), 1.0, Region.cube(3))


def test_same_seed_same_profile():
    a = integrate_grad_log(P("x1^2 + x2^4"), 1.0, budget=SMALL, seed=7)
    b = integrate_grad_log(P("x1^2 + x2^4"), 1.0, budget=SMALL, seed=7)
    c = integrate_grad_log(P("x1^2 + x2^4"), 1.0, budget=SMALL, seed=8)
    assert a.to_dict() == b.to_dict()
    assert a.value != c.value


def test_thread_count_does_not_change_results():
    a = sample_shells(P("x1*x2"), budget=SMALL, seed=3, threads=1)
    b = sample_shells(P("x1*x2"), budget=SMALL, seed=3, threads=4)
    for ra, rb in zip(a.replicates, b.replicates):
        assert np.array_equal(ra.weights, rb.weights)
        assert np.array_equal(ra.logf, rb.logf)


@settings(max_examples=8)
@given(st.floats(0.01, 100.0))
def test_grad_log_is_scale_free(c):
    # grad(cf)/(cf) = grad f / f, so the integral does not depend on c
    base = integrate_grad_log(P("x1^2 + x2^2"), 1.0)
    scaled = integrate_grad_log(P("x1^2 + x2^2").scale(c), 1.0)
    assert scaled.kind is Kind.CONVERGENT
    assert abs(scaled.value - base.value) <= base.error_bar + scaled.error_bar


def test_critical_exponent_disk():
    ce = critical_exponent(P("x1^2 + x2^2"), tol=0.02)
    assert abs(ce.gamma - 2.0) <= 0.05
    assert ce.bracket[0] <= ce.gamma <= ce.bracket[1]
    assert ce.width <= 0.05


def test_critical_exponent_one_variable():
    ce = critical_exponent(P("x1^2"), tol=0.02)
    assert abs(ce.gamma - 1.0) <= 0.05


def test_critical_exponent_rejects_bad_bracket():
    with pytest.raises(BadBracket):
        critical_exponent(P("x1^2 + x2^2"), search=(2.5, 3.5))
    with pytest.raises(BadBracket):
        critical_exponent(P("x1^2 + x2^2"), search=(2.0, 1.0))


@pytest.mark.parametrize("text, omega, order", [
    ("x1^2 + x2^2", (1.0, 0.0), 2),
    ("x1*x2", (0.6, 0.8), 2),
    ("x1^2 + x2^4", (0.0, 1.0), 4),
])
def test_radial_blowup(text, omega, order):
    r = radial_blowup_check(P(text), omega)
    assert r.kind is Kind.DIVERGENT and r.order == order
    # each dyadic piece of |phi'/phi| = N/rho integrates to N ln 2
    assert r.shells[-1] == pytest.approx(order * math.log(2), rel=1e-6)


def test_radial_nonvanishing_ray_converges():
    r = radial_blowup_check(P("x1^2 + x2^2 + 1"), (1.0, 0.0))
    assert r.kind is Kind.CONVERGENT and r.order == 0


def test_radial_degenerate_ray():
    with pytest.raises(DegenerateRay):
        radial_blowup_check(P("x1*x2"), (1.0, 0.0))
