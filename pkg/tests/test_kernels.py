"""Kernel tests against exact rational oracles.

The oracle represents each kernel as Fraction coefficients built from
its definition by binomial expansion, and differentiates, multiplies
and integrates those polynomials formally.  Expected values therefore
come from exact arithmetic that shares nothing with the package code.
"""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resdens.density import kde
from resdens.errors import DimensionError, InvalidOrder
from resdens.kernels import (
    continuity_scan,
    kernel_derivative_moment,
    power_weight,
    product_kernel,
    univariate_kernel,
    validate_kernel_conditions,
)

# --- formal polynomial machinery (coefficients in powers of u) ------------


def poly_scale(c, p):
    return [c * a for a in p]


def poly_mul(p, q):
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return out


def poly_deriv(p):
    return [k * a for k, a in enumerate(p)][1:] or [Fraction(0)]


def poly_eval(p, x):
    acc = Fraction(0)
    for a in reversed(p):
        acc = acc * x + a
    return acc


def poly_int_sym(p):
    """Integral over [-1, 1]: odd powers cancel."""
    return sum(2 * a / (k + 1) for k, a in enumerate(p) if k % 2 == 0)


def expand_even_power(inner_sign, n):
    """(1 + inner_sign * u^2)^n as a coefficient list."""
    out = [Fraction(0)] * (2 * n + 1)
    for k in range(n + 1):
        out[2 * k] = Fraction(math.comb(n, k)) * inner_sign**k
    return out


QUAD = poly_scale(Fraction(315, 256), expand_even_power(Fraction(-1), 4))
TRI = poly_scale(Fraction(35, 32), expand_even_power(Fraction(-1), 3))


def kernel_poly(name):
    return {"quadweight": QUAD, "triweight": TRI}[name]


def nth_deriv(p, order):
    for _ in range(order):
        p = poly_deriv(p)
    return p


# --- frozen point values ---------------------------------------------------


def test_quadweight_frozen_point_values():
    q = univariate_kernel()
    # dyadic rationals are exact floats: assert bit equality
    assert q.eval(0, 0.5) == 0.3893280029296875  # 25515/65536
    assert q.eval(1, 0.5) == -2.076416015625  # -8505/4096
    assert q.eval(0, 0.0) == 1.23046875  # 315/256
    assert q.eval(1, 0.0) == 0.0
    assert q.eval(2, 0.0) == -9.84375  # -315/32
    assert q.eval(3, 0.0) == 0.0


def test_product_kernel_frozen_point_values():
    k1 = product_kernel(dim=1)
    k2 = product_kernel(dim=2)
    assert k1.eval(np.array([0.0])) == 2.4609375
    assert k2.eval(np.array([0.0, 0.0])) == 6.05621337890625
    # 2 * Q(2/5) = 122523030 / 10^8, not a dyadic: nearest-float compare
    expected = float(Fraction(2) * poly_eval(QUAD, Fraction(2, 5)))
    assert k1.eval(np.array([0.2])) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(1.2252303, abs=1e-12)


def test_single_value_density_frozen():
    curve = kde(np.array([0.0]), 1.0, grid=np.array([0.0]))
    assert curve.values[0] == 1.23046875


@pytest.mark.parametrize("name", ["quadweight", "triweight"])
@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_derivatives_match_formal_polynomial(name, order):
    kernel = univariate_kernel(name)
    poly = nth_deriv(kernel_poly(name), order)
    for u in [Fraction(-9, 10), Fraction(-1, 3), Fraction(1, 7), Fraction(4, 5)]:
        expected = float(poly_eval(poly, u))
        got = kernel.eval(order, float(u))
        assert got == pytest.approx(expected, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("name", ["quadweight", "triweight"])
def test_support_is_closed_and_sharp(name):
    kernel = univariate_kernel(name)
    for order in range(4):
        assert kernel.eval(order, 1.0 + 1e-12) == 0.0
        assert kernel.eval(order, -1.5) == 0.0
    # boundary values follow the polynomial (quadweight: all zero there)
    poly3 = nth_deriv(kernel_poly(name), 3)
    assert kernel.eval(3, 1.0) == float(poly_eval(poly3, Fraction(1)))


def test_eval_rejects_bad_order():
    q = univariate_kernel()
    with pytest.raises(InvalidOrder):
        q.eval(4, 0.0)
    with pytest.raises(InvalidOrder):
        q.eval(-1, 0.0)


def test_product_kernel_dimension_check():
    k2 = product_kernel(dim=2)
    with pytest.raises(DimensionError):
        k2.eval(np.array([0.0]))


def test_product_kernel_support_half_cube():
    k1 = product_kernel(dim=1)
    assert k1.eval(np.array([0.5])) == 0.0  # edge maps to Q(1) = 0
    assert k1.eval(np.array([0.51])) == 0.0
    k3 = product_kernel(dim=3)
    assert k3.eval(np.array([0.1, 0.49, 0.2])) > 0.0
    assert k3.eval(np.array([0.1, 0.51, 0.2])) == 0.0


def test_product_kernel_unit_mass_oracle():
    # mass of 2 Q(2u) over [-1/2, 1/2] equals mass of Q over [-1, 1]
    mass = poly_int_sym(QUAD)
    assert mass == 1
    # and the d = 2 kernel evaluates as the product of axis factors
    k2 = product_kernel(dim=2)
    z = np.array([0.13, -0.27])
    k1 = product_kernel(dim=1)
    prod = k1.eval(z[:1]) * k1.eval(z[1:])
    assert k2.eval(z) == pytest.approx(prod, rel=1e-15)


@given(st.floats(-2.0, 2.0, allow_nan=False))
def test_quadweight_symmetry(u):
    q = univariate_kernel()
    assert q.eval(0, u) == q.eval(0, -u)
    assert q.eval(1, u) == -q.eval(1, -u)
    assert q.eval(2, u) == q.eval(2, -u)


@given(
    st.integers(0, 3),
    st.lists(st.floats(-1.5, 1.5, allow_nan=False), min_size=1, max_size=8),
)
def test_eval_vectorization_matches_scalar(order, us):
    q = univariate_kernel()
    arr = q.eval(order, np.asarray(us))
    for u, v in zip(us, arr):
        assert q.eval(order, u) == v


def test_continuity_scan_flags_only_the_triweight():
    quad = univariate_kernel()
    tri = univariate_kernel("triweight")
    for order in range(4):
        assert continuity_scan(quad, order) == 0.0
    for order in range(3):
        assert continuity_scan(tri, order) == 0.0
    # third derivative jumps by 48 * 35/32 = 52.5 at the support edge
    excess = continuity_scan(tri, 3)
    assert excess == pytest.approx(52.5 - 2000.0 * 1e-3, rel=0.05)


def test_validate_kernel_conditions_quadweight_passes():
    report = validate_kernel_conditions(univariate_kernel(), product_kernel(dim=2))
    assert report.passed
    assert report.failing() == []
    text = report.render()
    assert "PASS" in text and "FAIL" not in text


def test_validate_kernel_conditions_triweight_fails_smoothness_only():
    report = validate_kernel_conditions(
        univariate_kernel("triweight"), product_kernel("triweight", dim=1)
    )
    assert not report.passed
    failing = {c.condition for c in report.failing()}
    assert failing == {"residual-kernel continuity order 3"}
    assert "FAIL" in report.render()


def test_power_weight_signed_integer_and_domain():
    assert power_weight(-2.0, 1) == -2.0
    assert power_weight(-2.0, 2) == 4.0
    assert power_weight(-2.0, 0) == 1.0
    assert power_weight(4.0, 0.5) == 2.0
    with pytest.raises(ValueError):
        power_weight(1.0, 2.5)


# --- derivative moments against the rational oracle ------------------------


def uniform_pdf(width=2.0):
    def pdf(t):
        t = np.asarray(t, dtype=float)
        return np.where(np.abs(t) <= width, 1.0 / (2.0 * width), 0.0)

    return pdf


@pytest.mark.parametrize("order", [1, 2, 3])
@pytest.mark.parametrize("squared", [False, True])
@pytest.mark.parametrize("p", [0, 1, 2])
def test_derivative_moment_uniform_density_oracle(order, squared, p):
    """With a flat density over the window, the moment reduces to exact
    polynomial integrals: b1/(2w) * int K^(o)(v)^s (e + b1 v)^p dv."""
    e, b1, width = Fraction(1, 4), Fraction(1, 2), Fraction(2)
    window = nth_deriv(QUAD, order)
    if squared:
        window = poly_mul(window, window)
    # (e + b1 v)^p expanded in v
    weight = [Fraction(1)]
    for _ in range(p):
        weight = poly_mul(weight, [e, b1])
    expected = b1 / (2 * width) * poly_int_sym(poly_mul(window, weight))
    got = kernel_derivative_moment(
        univariate_kernel(), order, squared, p, uniform_pdf(float(width)), float(e), float(b1)
    )
    assert got == pytest.approx(float(expected), rel=1e-9, abs=1e-12)


def test_derivative_moment_rejects_bad_arguments():
    q = univariate_kernel()
    with pytest.raises(InvalidOrder):
        kernel_derivative_moment(q, 0, False, 0, uniform_pdf(), 0.0, 0.1)
    from resdens.errors import InvalidBandwidth

    with pytest.raises(InvalidBandwidth):
        kernel_derivative_moment(q, 1, False, 0, uniform_pdf(), 0.0, -0.1)


def test_unknown_kernel_name():
    with pytest.raises(KeyError):
        univariate_kernel("epanechnikov")
