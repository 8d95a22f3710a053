import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from lattice_kpz import ParameterError
from lattice_kpz.bounds import (FiberKernel, asymptote_fit, b2, b2_asymptote, b3_lower,
                                b3_prefactor, graded_rule, local_slopes, omega, v3_2,
                                v3_small_k, w_hat, zeta_grid)


def b2_closed(z):
    # partial fractions of ((2 + cos x)/3)^2 / (z + 4 (1 - cos x)) over the circle
    return ((z + 12) ** 2 / math.sqrt(z * (z + 8)) - z - 20) / 144


def test_omega_and_w_hat_values():
    assert omega(0.0) == 0.0
    assert omega(0.5) == pytest.approx(4.0, abs=1e-15)
    assert omega(0.25) == pytest.approx(2.0, abs=1e-15)
    assert w_hat(0.0) == 1.0
    assert w_hat(0.5) == pytest.approx(1 / 3, abs=1e-15)
    val, _ = integrate.quad(lambda k: w_hat(k) ** 2, 0, 1)
    assert val == pytest.approx(0.5, abs=1e-12)


@given(st.floats(0, 1))
def test_omega_matches_cosine_form(k):
    assert omega(k) == pytest.approx(2 * (1 - math.cos(2 * math.pi * k)), abs=1e-12)


def test_graded_rule_integrates_polynomials_and_singular_weights():
    x, w = graded_rule()
    assert w.sum() == pytest.approx(0.5, abs=1e-14)
    assert np.dot(w, x ** 3) == pytest.approx(0.5 ** 4 / 4, rel=1e-13)
    assert np.dot(w, 1 / np.sqrt(x)) == pytest.approx(2 * math.sqrt(0.5), rel=1e-8)


@pytest.mark.parametrize("zeta", [1e-12, 1e-8, 1e-4, 1.0, 100.0])
def test_b2_matches_closed_form(zeta):
    assert b2(FiberKernel(zeta)) == pytest.approx(b2_closed(zeta), rel=1e-8)


def test_b2_large_zeta():
    # 0.5/zeta (1 + O(1/zeta)); closed form 4.8937e-3
    val = b2(FiberKernel(100.0))
    assert val == pytest.approx(b2_closed(100.0), rel=1e-10)
    assert abs(val * 100 / 0.5 - 1) <= 5 / 100


def test_b2_small_zeta_law():
    z = 1e-6
    assert b2(FiberKernel(z)) * math.sqrt(z) == pytest.approx(2 ** -1.5, rel=0.01)
    assert b2_asymptote(z) * math.sqrt(z) == pytest.approx(0.353553, abs=5e-7)


def test_b2_monotone():
    z = zeta_grid(1e-9, 1e2, 4)
    vals = np.array([b2(FiberKernel(x)) for x in z])
    assert np.all(np.diff(vals) < 0)


def test_b2_slope():
    z = zeta_grid(1e-8, 1e-4, 8)
    fit = asymptote_fit([(x, b2(FiberKernel(x))) for x in z])
    assert fit.exponent == pytest.approx(-0.5, abs=0.005)


def test_v3_vanishes_at_zero_and_is_nonnegative():
    kern = FiberKernel(1e-4, 1.3)
    assert v3_2(0.0, kern) == 0.0
    ks = np.linspace(0, 1, 41)
    assert np.all(v3_2(ks, kern) >= 0)


def test_v3_against_adaptive_quadrature():
    kern = FiberKernel(0.3, 0.7)
    k = 0.13

    def integrand(q, kl, ko):
        num = (math.sin(2 * math.pi * (kl - q)) + math.sin(2 * math.pi * q) + 2 * math.sin(2 * math.pi * kl)) ** 2
        return num / (kern.zeta + omega(kl - q) + omega(ko) + omega(q))

    ref = sum(integrate.quad(integrand, -0.5, 0.5, args=(kl, ko), epsabs=0, epsrel=1e-12, limit=200)[0]
              for kl, ko in ((k, -k), (-k, k)))
    assert v3_2(k, kern) == pytest.approx(2 * kern.lam ** 2 * ref, rel=1e-10)


@pytest.mark.parametrize("k", [1e-6, 1e-7])
def test_v3_small_k_law(k):
    kern = FiberKernel(1e-8)
    assert 3 * v3_2(k, kern) / v3_small_k(k, kern) == pytest.approx(1.0, rel=0.05)


def test_b3_prefactor_value_and_scaling():
    assert b3_prefactor(1.0) == pytest.approx(0.0809, rel=2e-3)
    assert b3_prefactor(2.0) == pytest.approx(b3_prefactor(1.0) / 2)
    with pytest.raises(ParameterError):
        b3_prefactor(0.0)


def test_b3_sandwich_small_grid():
    for z in zeta_grid(1e-6, 1e-2, 2):
        lo, hi = b3_lower(FiberKernel(z)), b2(FiberKernel(z))
        assert 0 < lo <= hi


def test_b3_lambda_zero_is_b2():
    assert b3_lower(FiberKernel(1e-3, 0.0)) == pytest.approx(b2(FiberKernel(1e-3)), rel=1e-14)


def test_b3_stronger_coupling_lowers_bound():
    z = 1e-6
    assert b3_lower(FiberKernel(z, 2.0)) < b3_lower(FiberKernel(z, 1.0))


def test_fiber_kernel_domain():
    for bad in (0.0, -1.0, float("inf")):
        with pytest.raises(ParameterError):
            FiberKernel(bad)


def test_asymptote_fit_exact_power():
    z = zeta_grid(1e-9, 1e-5, 6)
    fit = asymptote_fit([(x, x ** -0.5) for x in z])
    assert fit.exponent == pytest.approx(-0.5, abs=1e-6)
    assert fit.prefactor == pytest.approx(1.0, abs=1e-6)
    e, c = fit
    assert (e, c) == (fit.exponent, fit.prefactor)
    assert np.allclose(local_slopes(z, z ** -0.5), -0.5)


@given(st.floats(-2, 2).filter(lambda e: abs(e) > 1e-3), st.floats(0.01, 100))
@settings(max_examples=30)
def test_asymptote_fit_recovers_power_laws(e, c):
    z = zeta_grid(1e-6, 1e-2, 6)
    fit = asymptote_fit([(x, c * x ** e) for x in z])
    assert fit.exponent == pytest.approx(e, abs=1e-9)
    assert fit.prefactor == pytest.approx(c, rel=1e-8)


def test_asymptote_fit_rejects_bad_input():
    z = zeta_grid(1e-6, 1e-2, 6)
    with pytest.raises(ParameterError):
        asymptote_fit([(x, x ** -0.5) for x in z[:10]])                # under three decades
    with pytest.raises(ParameterError):
        asymptote_fit([(x, x ** -0.5) for x in zeta_grid(1e-6, 1e-2, 4)])  # too sparse
    y = z ** -0.5
    y[5] = y[7]
    with pytest.raises(ParameterError):
        asymptote_fit(list(zip(z, y)))                                  # not monotone
