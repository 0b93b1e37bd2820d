"""Tests for Chebyshev polynomials and scheme coefficients.

High-precision oracle values come from mpmath."""

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stabmix.chebyshev import (cheb_T, cheb_T_derivs, cheb_U,
                               make_inner_coefficients, make_rkc_coefficients,
                               select_stages, shifted2_stability_poly,
                               shifted_stability_poly, stability_boundary,
                               stability_poly)
from stabmix.errors import InvalidStages


# ---------------------------------------------------------------------------
# polynomial recurrences vs mpmath

@pytest.mark.parametrize("j", [0, 1, 2, 5, 16, 64])
def test_cheb_T_matches_mpmath(j):
    for x in (-0.9, -0.3, 0.0, 0.7, 1.0, 1.001, 1.05):
        oracle = float(mpmath.chebyt(j, mpmath.mpf(x)))
        assert cheb_T(j, x) == pytest.approx(oracle, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("j", [0, 1, 2, 5, 16, 64])
def test_cheb_U_matches_mpmath(j):
    for x in (-0.9, 0.0, 0.7, 1.0, 1.001):
        oracle = float(mpmath.chebyu(j, mpmath.mpf(x)))
        assert cheb_U(j, x) == pytest.approx(oracle, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("j", [1, 4, 16, 64])
def test_cheb_T_derivs_vs_mpmath(j):
    for x in (1.0005, 1.01, 1.05):
        t, d, s = cheb_T_derivs(j, x)
        mt = mpmath.chebyt(j, mpmath.mpf(x))
        md = mpmath.diff(lambda z: mpmath.chebyt(j, z), mpmath.mpf(x))
        ms = mpmath.diff(lambda z: mpmath.chebyt(j, z), mpmath.mpf(x), 2)
        assert t == pytest.approx(float(mt), rel=1e-11)
        assert d == pytest.approx(float(md), rel=1e-9)
        assert s == pytest.approx(float(ms), rel=1e-8)


def test_cheb_first_derivative_identity():
    # T_j' = j * U_{j-1}
    for j in (1, 3, 10, 40):
        for x in (1.0001, 1.02):
            _, d, _ = cheb_T_derivs(j, x)
            assert d == pytest.approx(j * cheb_U(j - 1, x), rel=1e-11)


def test_cheb_negative_degree_raises():
    with pytest.raises(ValueError):
        cheb_T(-1, 0.5)
    with pytest.raises(ValueError):
        cheb_U(-2, 0.5)
    with pytest.raises(ValueError):
        cheb_T_derivs(-1, 0.5)


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=30),
       st.floats(min_value=-1.0, max_value=1.0))
def test_cheb_T_bounded_on_interval(j, x):
    assert abs(cheb_T(j, x)) <= 1.0 + 1e-10


# ---------------------------------------------------------------------------
# coefficient tables

@pytest.mark.parametrize("p,s", [(1, 1), (1, 4), (1, 16), (2, 2), (2, 8), (2, 64)])
def test_coefficients_basic_structure(p, s):
    c = make_rkc_coefficients(p, s)
    assert c.b.shape == (s + 1,) and c.mu.shape == (s + 1,)
    # the final abscissa is 1 (a consistent full step)
    assert c.c[s] == pytest.approx(1.0, rel=1e-10)
    # omega0 slightly above 1
    eps = 0.05 if p == 1 else 2.0 / 13.0
    assert c.omega0 == 1.0 + eps / s**2


def test_single_stage_first_order_is_euler():
    c = make_rkc_coefficients(1, 1)
    # mu_1 = b_1 * omega1 = (1/T_1(w0)) * T_1(w0)/T_1'(w0) = w0 / 1 ... = 1
    assert c.mu[1] == pytest.approx(1.0, rel=1e-14)


def test_coefficient_cache_returns_same_object():
    a = make_rkc_coefficients(1, 8)
    b = make_rkc_coefficients(1, 8)
    assert a is b


def test_invalid_order_and_stages():
    with pytest.raises(ValueError):
        make_rkc_coefficients(3, 4)
    with pytest.raises(InvalidStages):
        make_rkc_coefficients(2, 1)
    with pytest.raises(ValueError):
        make_rkc_coefficients(1, 4, eps=-0.1)


# ---------------------------------------------------------------------------
# stability polynomial identities

Z_SAMPLES = 50


@pytest.mark.parametrize("p", [1, 2])
@pytest.mark.parametrize("s", [4, 16, 64])
def test_shifted_poly_identity(p, s):
    """(R_k(z) - 1)/z computed by the Chebyshev-U sum matches the direct
    quotient to 1e-10 relative, k = s."""
    coeffs = make_rkc_coefficients(p, s)
    beta = stability_boundary(p, s)
    z = -np.linspace(0.02, 0.98, Z_SAMPLES) * beta
    direct = (stability_poly(coeffs, z) - 1.0) / z
    summed = shifted_stability_poly(coeffs, z)
    scale = np.maximum(np.abs(direct), 1e-30)
    assert np.max(np.abs(summed - direct) / scale) < 1e-10


@pytest.mark.parametrize("p", [1, 2])
@pytest.mark.parametrize("s", [4, 16, 64])
def test_shifted2_poly_identity(p, s):
    coeffs = make_rkc_coefficients(p, s)
    beta = stability_boundary(p, s)
    z = -np.linspace(0.02, 0.98, Z_SAMPLES) * beta
    direct = (stability_poly(coeffs, z) - 1.0 - coeffs.c[s] * z) / z**2
    summed = shifted2_stability_poly(coeffs, z)
    scale = np.maximum(np.abs(direct), 1e-30)
    assert np.max(np.abs(summed - direct) / scale) < 1e-10


@pytest.mark.parametrize("s", [2, 8, 32])
def test_shifted2_at_zero_is_half(s):
    """Second-order consistency: (R_s(z) - 1 - c_s z)/z^2 -> 1/2 at z = 0."""
    coeffs = make_rkc_coefficients(2, s)
    assert shifted2_stability_poly(coeffs, 0.0) == pytest.approx(0.5, abs=1e-12)


def test_shifted_poly_at_zero_is_ck():
    coeffs = make_rkc_coefficients(1, 8)
    for k in (2, 5, 8):
        assert shifted_stability_poly(coeffs, 0.0, k=k) == pytest.approx(
            coeffs.c[k], rel=1e-12)


@pytest.mark.parametrize("p", [1, 2])
def test_poly_bounded_at_boundary(p):
    for s in range(2, 129):
        coeffs = make_rkc_coefficients(p, s)
        beta = stability_boundary(p, s)
        assert abs(stability_poly(coeffs, -beta)) <= 1.0 + 1e-12


@pytest.mark.parametrize("p,s", [(1, 4), (1, 32), (2, 4), (2, 32)])
def test_poly_bounded_on_interval(p, s):
    coeffs = make_rkc_coefficients(p, s)
    beta = stability_boundary(p, s)
    z = -np.linspace(0.0, 1.0, 2000) * beta
    assert np.max(np.abs(stability_poly(coeffs, z))) <= 1.0 + 1e-12


def test_poly_consistency_at_zero():
    for p in (1, 2):
        coeffs = make_rkc_coefficients(p, 8)
        assert stability_poly(coeffs, 0.0) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# stability boundary and stage selection

def test_boundary_formulas():
    assert stability_boundary(1, 10, eps=0.0) == pytest.approx(2.0 * 100)
    assert stability_boundary(1, 10) == pytest.approx((2 - 0.2 / 3) * 100)
    assert stability_boundary(2, 10) == pytest.approx(
        (2.0 / 3.0) * (1 - (4.0 / 13.0) / 15.0) * 99)


def test_boundary_grows_quadratically():
    vals = [stability_boundary(1, s) for s in (8, 16, 32)]
    assert vals[1] / vals[0] == pytest.approx(4.0, rel=1e-12)
    assert vals[2] / vals[1] == pytest.approx(4.0, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=1, max_value=2),
       st.floats(min_value=1e-4, max_value=10.0),
       st.floats(min_value=0.0, max_value=1e5))
def test_select_stages_minimality(p, dt, rho):
    s = select_stages(p, dt, rho)
    assert dt * rho <= stability_boundary(p, s)
    if s > (1 if p == 1 else 2):
        assert dt * rho > stability_boundary(p, s - 1)


def test_select_stages_validation():
    with pytest.raises(ValueError):
        select_stages(1, 0.0, 10.0)
    with pytest.raises(ValueError):
        select_stages(1, 0.1, -1.0)


# ---------------------------------------------------------------------------
# inner (averaged-force) coefficients

def test_inner_coefficients_m1_is_identity_weight():
    inner = make_inner_coefficients(1)
    # upsilon1 = T_1/T_1' = upsilon0, so alpha_1 = 1: one inner stage
    # reproduces the plain force
    assert inner.alpha[1] == pytest.approx(1.0, rel=1e-14)


def test_inner_coefficients_structure():
    inner = make_inner_coefficients(6)
    assert inner.m == 6
    assert inner.upsilon0 == 1.0 + 0.05 / 36.0
    assert inner.a[0] == 1.0
    # recursion weights mirror the first-order outer family
    outer = make_rkc_coefficients(1, 6, eps=0.05)
    assert np.allclose(inner.alpha[1:], outer.mu[1:], rtol=1e-12)
    assert np.allclose(inner.beta[2:], outer.nu[2:], rtol=1e-12)
    assert np.allclose(inner.gamma[2:], outer.kappa[2:], rtol=1e-12)


def test_inner_invalid_stage_count():
    with pytest.raises(InvalidStages):
        make_inner_coefficients(0)
