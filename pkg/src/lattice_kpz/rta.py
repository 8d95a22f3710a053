"""Relaxation-time closure of the resolvent hierarchy.

With the separable ansatz V_m = gamma_m * Omega_m the potential recursion
collapses to scalars: gamma_n = 0 and

    gamma_m = 18 lam^2 int_T dk / (zeta + (1 + gamma_{m+1}) 2 omega(k)),

and the depth-n approximant of the current resolvent is
d_n(zeta) = int_T dk w_hat(k)^2 / (zeta + (1 + gamma_2) 2 omega(k)).
For small zeta, d_n ~ (2 zeta)^{-alpha_n} with alpha_{j+1} = (1 - alpha_j)/2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import gamma as gamma_fn

from .bounds import FiberKernel, _as_kernel, dressed_resolvent, graded_rule, omega
from .core import ParameterError

KPZ_SECOND_MOMENT = 0.510523


def alpha_recursive(n: int) -> list[Fraction]:
    """alpha_1 = 0, alpha_{j+1} = (1 - alpha_j)/2, as exact rationals."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    out = [Fraction(0)]
    while len(out) < n:
        out.append((1 - out[-1]) / 2)
    return out


def alpha_closed(j: int) -> Fraction:
    """alpha_j = (1 - (-2)^{-(j-1)})/3."""
    return (1 - Fraction(-2) ** (-(j - 1))) / 3


def alpha_seq(n: int) -> list[Fraction]:
    """alpha_1..alpha_n; the recursion is checked against the closed form."""
    seq = alpha_recursive(n)
    if any(a != alpha_closed(j + 1) for j, a in enumerate(seq)):
        raise ArithmeticError("alpha recursion disagrees with its closed form")
    return seq


@dataclass
class RtaState:
    depth: int
    gamma: dict          # m -> gamma_m for m = 2..depth
    zeta: float
    lam: float

    @property
    def gamma2(self) -> float:
        return self.gamma[2]


def _level_integral(zeta: float, stiffness: float) -> float:
    """int_T dk / (zeta + stiffness 2 omega(k))."""
    k, w = graded_rule()
    return float(2.0 * np.dot(w, 1.0 / (zeta + stiffness * (2.0 * omega(k)))))


def gamma_recursion(n: int, kernel) -> RtaState:
    if n < 2:
        raise ParameterError("depth must be >= 2")
    kern = _as_kernel(kernel)
    gam = {n: 0.0}
    for m in range(n - 1, 1, -1):
        gam[m] = 18.0 * kern.lam ** 2 * _level_integral(kern.zeta, 1.0 + gam[m + 1])
    return RtaState(n, dict(sorted(gam.items())), kern.zeta, kern.lam)


def level_closed_form(zeta: float, lam: float, gamma_next: float) -> float:
    """Closed form of one level: 18 lam^2 / sqrt(zeta (zeta + 8 (1 + gamma_next)))."""
    return 18.0 * lam ** 2 / math.sqrt(zeta * (zeta + 8.0 * (1.0 + gamma_next)))


def d_n(n: int, kernel, state: RtaState | None = None) -> float:
    kern = _as_kernel(kernel)
    state = gamma_recursion(n, kern) if state is None else state
    if state.depth != n or state.zeta != kern.zeta or state.lam != kern.lam:
        raise ParameterError("state does not match (n, zeta, lambda)")
    return dressed_resolvent(kern.zeta, 1.0 + state.gamma2)


def d_n_scaling(n: int, zeta: float, lam: float) -> float:
    """Small-zeta law 2^{-1} (9 lam^2)^{-alpha_{n-1}} (2 zeta)^{-alpha_n}."""
    a = alpha_seq(n)
    return 0.5 * (9.0 * lam ** 2) ** -float(a[n - 2]) * (2.0 * zeta) ** -float(a[n - 1])


def d_infinity_prefactor(lam: float) -> float:
    """Coefficient of zeta^{-1/3} in the n -> infinity limit: 2^{-4/3} 3^{-2/3} lam^{-2/3}."""
    if lam == 0:
        raise ParameterError("lambda must be nonzero")
    return 2.0 ** (-4 / 3) * 3.0 ** (-2 / 3) * abs(lam) ** (-2 / 3)


def kpz_prediction_prefactor() -> float:
    """3^{-2/3} Gamma(7/3) <x^2>_KPZ, the KPZ scaling-theory coefficient of (lam^2 zeta)^{-1/3}."""
    return 3.0 ** (-2 / 3) * float(gamma_fn(7 / 3)) * KPZ_SECOND_MOMENT


def prefactor_table(lam: float = 1.0) -> dict:
    rta_value = d_infinity_prefactor(lam) * abs(lam) ** (2 / 3)
    kpz = kpz_prediction_prefactor()
    return {"rta": rta_value, "kpz": kpz, "ratio": rta_value / kpz}
