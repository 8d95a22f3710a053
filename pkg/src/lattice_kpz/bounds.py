"""Zero-momentum resolvent bounds: the two-particle upper bound b2 and the
three-particle lower bound b3, both as torus integrals.

All integrands are even and 1-periodic in the outer momentum, so integrals over
the torus are twice integrals over [0, 1/2].  Near-singular behaviour sits at
k = 0 (omega(k) ~ (2 pi k)^2), which composite Gauss-Legendre panels with
geometric grading toward 0 resolve down to widths far below sqrt(zeta).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import ParameterError

GL_ORDER = 16
GRADING_RATIO = 2.0
SMALLEST_PANEL = 1e-20


@dataclass(frozen=True)
class FiberKernel:
    zeta: float
    lam: float = 1.0

    def __post_init__(self):
        if not (self.zeta > 0 and math.isfinite(self.zeta)):
            raise ParameterError("zeta must be finite and > 0")
        if not math.isfinite(self.lam):
            raise ParameterError("lambda must be finite")


def omega(k):
    """Lattice dispersion 2(1 - cos 2 pi k), evaluated as 4 sin^2(pi k) to keep small-k precision."""
    return 4.0 * np.sin(np.pi * np.asarray(k, dtype=float)) ** 2


def w_hat(k):
    """Two-particle current amplitude (2 + cos 2 pi k)/3, equal to 1 at k = 0."""
    return (2.0 + np.cos(2.0 * np.pi * np.asarray(k, dtype=float))) / 3.0


@lru_cache(maxsize=None)
def graded_rule(lo: float = 0.0, hi: float = 0.5, order: int = GL_ORDER,
                ratio: float = GRADING_RATIO, smallest: float = SMALLEST_PANEL):
    """Nodes and weights on [lo, hi] with panels shrinking geometrically toward ``lo``."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = [hi - lo]
    while edges[-1] > smallest:
        edges.append(edges[-1] / ratio)
    edges = np.sort(np.array(edges + [0.0]))
    a, b = edges[:-1], edges[1:]
    nodes = lo + (0.5 * (b - a)[:, None] * x + 0.5 * (a + b)[:, None]).ravel()
    weights = (0.5 * (b - a)[:, None] * w).ravel()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _symmetric_rule(order: int = GL_ORDER):
    """Nodes on [-1/2, 1/2] graded toward 0 from both sides."""
    x, w = graded_rule(order=order)
    return np.concatenate([-x[::-1], x]), np.concatenate([w[::-1], w])


def _as_kernel(kernel, lam=None) -> FiberKernel:
    if isinstance(kernel, FiberKernel):
        return kernel
    return FiberKernel(float(kernel), 1.0 if lam is None else float(lam))


def dressed_resolvent(zeta: float, stiffness: float = 1.0, *, order: int = GL_ORDER) -> float:
    """int_T dk w_hat(k)^2 / (zeta + stiffness * 2 omega(k))."""
    k, w = graded_rule(order=order)
    return float(2.0 * np.dot(w, w_hat(k) ** 2 / (zeta + stiffness * (2.0 * omega(k)))))


def b2(kernel, *, order: int = GL_ORDER) -> float:
    """Upper bound: int_T dk w_hat(k)^2 / (zeta + 2 omega(k))."""
    return dressed_resolvent(_as_kernel(kernel).zeta, 1.0, order=order)


def _sin(x):
    return np.sin(2.0 * np.pi * x)


def v3_2(k, kernel, *, order: int = GL_ORDER):
    """Three-particle potential on the fiber (k, -k).

    2 lam^2 sum over l of int dk3 (sin 2pi(k_l - k3) + sin 2pi k3 + 2 sin 2pi k_l)^2
    / (zeta + omega(k_l - k3) + omega(k_other) + omega(k3)), with (k_1, k_2) = (k, -k).
    Accepts scalar or array ``k``.
    """
    kern = _as_kernel(kernel)
    k = np.asarray(k, dtype=float)
    q, wq = _symmetric_rule(order)
    kk = k[..., None]
    total = np.zeros(k.shape)
    for kl, ko in ((kk, -kk), (-kk, kk)):
        num = (_sin(kl - q) + _sin(q) + 2.0 * _sin(kl)) ** 2
        den = kern.zeta + omega(kl - q) + omega(ko) + omega(q)
        total = total + np.sum(wq * num / den, axis=-1)
    out = 2.0 * kern.lam ** 2 * total
    return float(out) if out.ndim == 0 else out


def b3_lower(kernel, *, order: int = GL_ORDER, chunk: int = 256) -> float:
    """Lower bound: int_T dk w_hat(k)^2 / (zeta + 2 omega(k) + 3 V(k, -k))."""
    kern = _as_kernel(kernel)
    k, w = graded_rule(order=order)
    v = np.concatenate([v3_2(k[i:i + chunk], kern, order=order) for i in range(0, k.size, chunk)])
    return float(2.0 * np.dot(w, w_hat(k) ** 2 / (kern.zeta + 2.0 * omega(k) + 3.0 * v)))


def b2_asymptote(zeta) -> float:
    """Small-zeta law 2^{-3/2} zeta^{-1/2}."""
    return 2.0 ** -1.5 * np.asarray(zeta, float) ** -0.5


def b3_prefactor(lam: float) -> float:
    """Coefficient of zeta^{-1/4} in the small-zeta lower bound: lam^{-1} 2^{-5/4} 3^{-3/2}."""
    if lam == 0:
        raise ParameterError("the zeta^{-1/4} law needs lambda != 0")
    return 2.0 ** -1.25 * 3.0 ** -1.5 / abs(lam)


def v3_small_k(k, kernel):
    """Leading small-k, small-zeta behaviour of 3V: lam^2 2^{1/2} 27 zeta^{-1/2} (2 pi k)^2."""
    kern = _as_kernel(kernel)
    return kern.lam ** 2 * math.sqrt(2.0) * 27.0 * kern.zeta ** -0.5 * (2 * np.pi * np.asarray(k)) ** 2


def zeta_grid(zeta_min: float = 1e-9, zeta_max: float = 1e-2, per_decade: int = 8) -> np.ndarray:
    decades = math.log10(zeta_max / zeta_min)
    n = int(round(decades * per_decade)) + 1
    return np.geomspace(zeta_min, zeta_max, n)


@dataclass
class AsymptoteFit:
    exponent: float
    prefactor: float
    local_slopes: np.ndarray
    tail_drift: float   # change of local slope across the smallest-zeta decade

    def __iter__(self):
        return iter((self.exponent, self.prefactor))


def asymptote_fit(values) -> AsymptoteFit:
    """Least-squares power law y = c zeta^e over log-spaced samples (zeta, y)."""
    arr = np.asarray(list(values), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ParameterError("values must be (zeta, y) pairs")
    arr = arr[np.argsort(arr[:, 0])]
    z, y = arr[:, 0], arr[:, 1]
    if np.any(z <= 0) or np.any(y <= 0):
        raise ParameterError("zeta and y must be positive")
    lz = np.log10(z)
    decades = lz[-1] - lz[0]
    if decades < 3 - 1e-9:
        raise ParameterError("asymptote fits need at least three decades in zeta")
    if (z.size - 1) / decades < 6 - 1e-9:
        raise ParameterError("asymptote fits need at least six points per decade")
    steps = np.diff(lz)
    if np.max(np.abs(steps - steps.mean())) > 1e-6 * max(1.0, steps.mean()):
        raise ParameterError("zeta samples must be log-spaced")
    dy = np.diff(y)
    if not (np.all(dy < 0) or np.all(dy > 0)):
        raise ParameterError("input is not monotone in zeta")
    slope, intercept = np.polyfit(np.log(z), np.log(y), 1)
    local = np.diff(np.log(y)) / np.diff(np.log(z))
    per = int(round(1 / steps.mean()))
    drift = float(local[min(per, local.size - 1)] - local[0])
    return AsymptoteFit(float(slope), float(math.exp(intercept)), local, drift)


def local_slopes(zeta, y) -> np.ndarray:
    """Centered d log y / d log zeta (one-sided at the ends)."""
    return np.gradient(np.log(np.asarray(y, float)), np.log(np.asarray(zeta, float)))
