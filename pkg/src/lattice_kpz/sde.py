"""Euler-Maruyama integration of the conserved-noise lattice KPZ equation.

    du_j/dt = w_j - w_{j-1} + sqrt(D0) (xi_j - xi_{j-1})
    w_j     = (lambda0/6)(u_j^2 + u_j u_{j+1} + u_{j+1}^2) + nu0 (u_{j+1} - u_j)

on a ring of N sites.  One Gaussian per site per step is drawn and differenced
on the ring, so sum_j u_j is conserved step by step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import BlowUpError, ModelParameters, ParameterError, SeedSpec, SlopeField

NOISE_BLOCK = 512
STABILITY_BOUND = 0.5


@dataclass(frozen=True)
class NoiseIncrement:
    """Standard Gaussians, one per site, for a single time step."""

    xi: np.ndarray

    @classmethod
    def draw(cls, rng: np.random.Generator, ring_size: int) -> "NoiseIncrement":
        return cls(rng.standard_normal(ring_size))


@dataclass(frozen=True)
class Trajectory:
    """Checkpointed fields of one replica.

    ``fields[i]`` is the slope field at ``times[i]``.  ``current_sum`` is the
    ring-summed current sum_j w_j sampled at ``current_times``; on the ring the
    diffusive part of it telescopes away.
    """

    times: np.ndarray
    fields: np.ndarray = field(repr=False)
    dt: float
    params: ModelParameters
    seed: SeedSpec
    current_times: np.ndarray = field(default=None, repr=False)
    current_sum: np.ndarray = field(default=None, repr=False)
    max_guard: float = float("nan")

    @property
    def checkpoints(self):
        return [(float(t), SlopeField(f)) for t, f in zip(self.times, self.fields)]


def blowup_threshold(p: ModelParameters) -> float:
    return 1e6 * math.sqrt(p.chi())


def default_dt(p: ModelParameters) -> float:
    return 0.01 / p.nu0


def guard_value(u: np.ndarray, dt: float, p: ModelParameters) -> float:
    """dt (lambda0 max|u| + 4 nu0); explicit stepping needs this <= 0.5."""
    return dt * (abs(p.lambda0) * float(np.max(np.abs(u))) + 4.0 * p.nu0)


def _as_array(u) -> np.ndarray:
    arr = u.values if isinstance(u, SlopeField) else np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise BlowUpError("non-finite slope field")
    return arr


def current(u, p: ModelParameters) -> np.ndarray:
    """Bond currents w_j between sites j and j+1 (indices mod N)."""
    u = _as_array(u)
    up = np.roll(u, -1)
    return p.lambda0 / 6.0 * (u * u + u * up + up * up) + p.nu0 * (up - u)


def drift(u, p: ModelParameters) -> np.ndarray:
    w = current(u, p)
    return w - np.roll(w, 1)


def step(u, dt: float, noise: NoiseIncrement, p: ModelParameters) -> SlopeField:
    """One Euler-Maruyama step; raises BlowUpError past the divergence threshold."""
    if not dt > 0:
        raise ParameterError("dt must be positive")
    arr = _as_array(u)
    xi = np.asarray(noise.xi, dtype=float)
    if xi.shape != arr.shape:
        raise ParameterError("noise increment must have one entry per site")
    new = arr + dt * drift(arr, p) + math.sqrt(p.d0 * dt) * (xi - np.roll(xi, 1))
    if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > blowup_threshold(p):
        raise BlowUpError("slope field exceeded the divergence threshold")
    return SlopeField(new)


@numba.njit(cache=True, nogil=True)
def _advance(u, xi, dt, lambda0, nu0, noise_amp, threshold, wsum):
    """Advance ``u`` in place by ``xi.shape[0]`` steps.

    wsum[s] receives sum_j w_j *before* step s.  Returns the index of the step
    that blew up, or -1.  The arithmetic mirrors ``step`` term by term.
    """
    n = u.shape[0]
    c = lambda0 / 6.0
    w = np.empty(n)
    for s in range(xi.shape[0]):
        total = 0.0
        for j in range(n):
            a = u[j]
            b = u[j + 1] if j + 1 < n else u[0]
            w[j] = c * (a * a + a * b + b * b) + nu0 * (b - a)
            total += w[j]
        wsum[s] = total
        blown = False
        wprev = w[n - 1]
        xprev = xi[s, n - 1]
        for j in range(n):
            x = xi[s, j]
            v = u[j] + dt * (w[j] - wprev) + noise_amp * (x - xprev)
            wprev = w[j]
            xprev = x
            u[j] = v
            if not (abs(v) <= threshold):
                blown = True
        if blown:
            return s
    return -1


def _step_indices(times, dt: float, what: str) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    idx = np.rint(times / dt).astype(np.int64)
    if np.any(np.abs(idx * dt - times) > 1e-9 * max(1.0, float(np.max(np.abs(times), initial=0.0)))):
        raise ParameterError(f"{what} must be multiples of dt")
    return idx


def evolve(u0, t_end: float, dt: float, checkpoints, seed: SeedSpec, p: ModelParameters,
           *, current_every: int = 0, attempt: int = 0) -> Trajectory:
    """Integrate from ``u0`` to ``t_end`` recording field copies at ``checkpoints``.

    Deterministic in ``(u0, seed, attempt)``.  With ``current_every = k > 0`` the
    ring-summed current is recorded every k steps as well.
    """
    if not dt > 0:
        raise ParameterError("dt must be positive")
    if t_end < 0:
        raise ParameterError("t_end must be non-negative")
    u = np.array(_as_array(u0), dtype=float)
    if u.size != p.ring_size:
        raise ParameterError("initial field does not match ring_size")
    ck = np.unique(np.asarray(checkpoints, dtype=float))
    if ck.size == 0 or ck[0] < 0 or ck[-1] > t_end + 1e-12:
        raise ParameterError("checkpoints must lie in [0, t_end]")
    ck_steps = _step_indices(ck, dt, "checkpoints")
    n_steps = int(_step_indices([t_end], dt, "t_end")[0])
    guard = guard_value(u, dt, p)
    if guard > STABILITY_BOUND:
        raise ParameterError(f"dt={dt} violates the stability guard ({guard:.3f} > {STABILITY_BOUND})")

    rng = seed.generator(purpose=2 * attempt + 1)
    threshold = blowup_threshold(p)
    amp = math.sqrt(p.d0 * dt)
    fields = np.empty((ck.size, u.size))
    wsum_all = np.empty(n_steps + 1)
    max_abs = float(np.max(np.abs(u)))

    next_ck = 0
    while next_ck < ck.size and ck_steps[next_ck] == 0:
        fields[next_ck] = u
        next_ck += 1
    done = 0
    while done < n_steps:
        block = min(NOISE_BLOCK, n_steps - done)
        # stop blocks at checkpoints so copies are taken at the right step
        if next_ck < ck.size:
            block = min(block, int(ck_steps[next_ck]) - done)
        xi = rng.standard_normal((block, u.size))
        bad = _advance(u, xi, dt, p.lambda0, p.nu0, amp, threshold, wsum_all[done:done + block])
        if bad >= 0:
            raise BlowUpError("slope field exceeded the divergence threshold",
                              time=(done + bad + 1) * dt)
        done += block
        max_abs = max(max_abs, float(np.max(np.abs(u))))
        while next_ck < ck.size and ck_steps[next_ck] == done:
            fields[next_ck] = u
            next_ck += 1
    wsum_all[n_steps] = float(np.sum(current(u, p)))

    cur_t = cur = None
    if current_every > 0:
        sel = np.arange(0, n_steps + 1, current_every)
        cur_t = sel * dt
        cur = wsum_all[sel].copy()
    return Trajectory(times=ck, fields=fields, dt=dt, params=p, seed=seed,
                      current_times=cur_t, current_sum=cur,
                      max_guard=dt * (abs(p.lambda0) * max_abs + 4.0 * p.nu0))
