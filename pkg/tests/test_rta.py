import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lattice_kpz import ParameterError
from lattice_kpz.bounds import FiberKernel, asymptote_fit, b2, zeta_grid
from lattice_kpz.rta import (KPZ_SECOND_MOMENT, alpha_closed, alpha_recursive, alpha_seq, d_infinity_prefactor,
                             d_n, d_n_scaling, gamma_recursion, kpz_prediction_prefactor,
                             level_closed_form, prefactor_table)


def test_alpha_values():
    a = alpha_seq(4)
    assert a == [Fraction(0), Fraction(1, 2), Fraction(1, 4), Fraction(3, 8)]


def test_alpha_closed_form_exact_to_64():
    rec = alpha_recursive(64)
    assert all(rec[j] == alpha_closed(j + 1) for j in range(64))
    assert abs(float(rec[-1]) - 1 / 3) < 1e-18


@given(st.integers(1, 200))
def test_alpha_bounded_and_alternating(n):
    a = alpha_closed(n)
    assert 0 <= a <= Fraction(1, 2)
    assert (a - Fraction(1, 3)) * (alpha_closed(n + 1) - Fraction(1, 3)) <= 0


def test_gamma_base_levels():
    s = gamma_recursion(6, FiberKernel(1e-8))
    assert s.gamma[6] == 0.0 and all(g >= 0 for g in s.gamma.values())
    assert s.gamma[5] * math.sqrt(2e-8) / 9 == pytest.approx(1.0, rel=0.01)
    s = gamma_recursion(6, FiberKernel(1e-10))
    assert s.gamma[4] * (2e-10) ** 0.25 / 3 == pytest.approx(1.0, rel=0.02)


@pytest.mark.parametrize("zeta", [1e-12, 1e-6, 0.5])
def test_gamma_levels_match_closed_form(zeta):
    s = gamma_recursion(8, FiberKernel(zeta, 0.8))
    for m in range(2, 8):
        assert s.gamma[m] == pytest.approx(level_closed_form(zeta, 0.8, s.gamma[m + 1]), rel=1e-9)


def test_gamma_zero_coupling():
    s = gamma_recursion(5, FiberKernel(1e-6, 0.0))
    assert all(g == 0.0 for g in s.gamma.values())


def test_gamma_levels_alternate():
    # gamma_{n-j} ~ zeta^{-alpha_{j+1}}: odd j grow fastest, so the ordering interleaves
    s = gamma_recursion(6, FiberKernel(1e-8))
    g = s.gamma
    assert g[5] > g[3] > g[2] > g[4] > g[6]


def test_d2_is_b2_bitwise():
    for z in (1e-12, 1e-5, 3.0):
        assert d_n(2, FiberKernel(z)) == b2(FiberKernel(z))


def test_d6_scaling_law():
    z = 1e-10
    assert d_n(6, FiberKernel(z)) / d_n_scaling(6, z, 1.0) == pytest.approx(1.0, rel=0.05)


@pytest.mark.parametrize("n", [4, 6, 8, 12])
def test_d_n_exponents(n):
    z = zeta_grid(1e-12, 1e-8, 8)
    fit = asymptote_fit([(x, d_n(n, FiberKernel(x))) for x in z])
    assert fit.exponent == pytest.approx(-float(alpha_closed(n)), abs=0.02)


def test_d_n_rejects_mismatched_state():
    s = gamma_recursion(4, FiberKernel(1e-6))
    with pytest.raises(ParameterError):
        d_n(5, FiberKernel(1e-6), s)
    with pytest.raises(ParameterError):
        gamma_recursion(1, FiberKernel(1e-6))


def test_prefactors():
    assert d_infinity_prefactor(1.0) == pytest.approx(0.19079, abs=1e-5)
    assert d_infinity_prefactor(8.0) == pytest.approx(d_infinity_prefactor(1.0) / 4)
    assert kpz_prediction_prefactor() == pytest.approx(0.292, abs=5e-4)
    assert KPZ_SECOND_MOMENT == 0.510523
    tab = prefactor_table(1.0)
    assert tab["ratio"] == pytest.approx(0.1907 / 0.2922, abs=2e-3)
    with pytest.raises(ParameterError):
        d_infinity_prefactor(0.0)


def test_d12_prefactor():
    z = 1e-12
    assert d_n(12, FiberKernel(z)) * z ** (1 / 3) == pytest.approx(0.1907, rel=0.05)
