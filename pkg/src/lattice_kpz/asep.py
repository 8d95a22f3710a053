"""Partially asymmetric simple exclusion on a ring, simulated exactly in continuous time.

Rejection-free direct method: the active bonds (particle with an empty right
neighbour, rate 1+p; particle with an empty left neighbour, rate 1-p) are kept
in two index sets with O(1) insertion and removal.  Random numbers come in
blocks from a counter-based numpy generator, so a replica is a deterministic
function of its seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .core import ParameterError, SeedSpec
from .stats import CorrelationSeries, TwoPointAccumulator

RANDOM_BLOCK = 1 << 15


@dataclass(frozen=True)
class AsepConfig:
    ring_size: int
    p: float
    density: float = 0.5

    def __post_init__(self):
        if int(self.ring_size) != self.ring_size or self.ring_size < 3:
            raise ParameterError("ring_size must be an integer >= 3")
        if not -1.0 <= self.p <= 1.0:
            raise ParameterError("asymmetry p must lie in [-1, 1] so both rates are >= 0")
        if not 0.0 < self.density < 1.0:
            raise ParameterError("density must lie in (0, 1)")

    @property
    def right_rate(self) -> float:
        return 1.0 + self.p

    @property
    def left_rate(self) -> float:
        return 1.0 - self.p

    def chi(self) -> float:
        return self.density * (1.0 - self.density)

    def to_dict(self) -> dict:
        return {"ring_size": self.ring_size, "p": self.p, "density": self.density}


@dataclass(frozen=True)
class Occupation:
    eta: np.ndarray

    def __post_init__(self):
        arr = np.array(self.eta, dtype=np.int8)
        if arr.ndim != 1 or not np.all((arr == 0) | (arr == 1)):
            raise ParameterError("occupations must be a 1-d array of 0/1")
        arr.setflags(write=False)
        object.__setattr__(self, "eta", arr)

    @property
    def particles(self) -> int:
        return int(self.eta.sum())


@dataclass
class AsepTrajectory:
    times: np.ndarray
    fields: np.ndarray = field(repr=False)   # (checkpoints, N) int8
    config: AsepConfig
    seed: SeedSpec
    events: int = 0

    @property
    def current_times(self):
        return None

    current_sum = current_times


def sample_bernoulli(cfg: AsepConfig, seed: SeedSpec) -> Occupation:
    """Independent Bernoulli(density) sites; the particle number fluctuates between replicas."""
    rng = seed.generator(purpose=0)
    return Occupation((rng.random(cfg.ring_size) < cfg.density).astype(np.int8))


@numba.njit(cache=True)
def _rebuild(eta, rset, rpos, lset, lpos):
    n = eta.size
    nr = 0
    nl = 0
    for j in range(n):
        k = (j + 1) % n
        rpos[j] = -1
        lpos[j] = -1
        if eta[j] == 1 and eta[k] == 0:
            rset[nr] = j
            rpos[j] = nr
            nr += 1
        elif eta[j] == 0 and eta[k] == 1:
            lset[nl] = j
            lpos[j] = nl
            nl += 1
    return nr, nl


@numba.njit(cache=True)
def _remove(b, bset, bpos, count):
    i = bpos[b]
    last = bset[count - 1]
    bset[i] = last
    bpos[last] = i
    bpos[b] = -1
    return count - 1


@numba.njit(cache=True)
def _refresh(b, eta, rset, rpos, nr, lset, lpos, nl):
    """Re-classify bond (b, b+1) after a change of either endpoint."""
    n = eta.size
    k = (b + 1) % n
    if rpos[b] >= 0:
        nr = _remove(b, rset, rpos, nr)
    if lpos[b] >= 0:
        nl = _remove(b, lset, lpos, nl)
    if eta[b] == 1 and eta[k] == 0:
        rset[nr] = b
        rpos[b] = nr
        nr += 1
    elif eta[b] == 0 and eta[k] == 1:
        lset[nl] = b
        lpos[b] = nl
        nl += 1
    return nr, nl


@numba.njit(cache=True, nogil=True)
def _run(eta, t, t_stop, expo, unif, rate_r, rate_l, rset, rpos, lset, lpos, counts):
    """Advance until the next event would pass t_stop or the random block is used up.

    The pending waiting time of the next event is expo[i] / total, so stopping
    at t_stop and resuming with a fresh variate is exact (memorylessness).
    Returns (t, random numbers used, events fired, reached t_stop).
    """
    n = eta.size
    nr = counts[0]
    nl = counts[1]
    used = 0
    fired = 0
    m = expo.size
    while used < m:
        total = rate_r * nr + rate_l * nl
        if total <= 0.0:
            return t_stop, used, fired, True
        dt = expo[used] / total
        if t + dt > t_stop:
            counts[0] = nr
            counts[1] = nl
            return t_stop, used + 1, fired, True
        t += dt
        x = unif[used] * total
        used += 1
        if x < rate_r * nr:
            b = rset[min(int(x / rate_r), nr - 1)]
            eta[b] = 0
            eta[(b + 1) % n] = 1
        else:
            b = lset[min(int((x - rate_r * nr) / rate_l), nl - 1)]
            eta[b] = 1
            eta[(b + 1) % n] = 0
        fired += 1
        for c in ((b - 1) % n, b, (b + 1) % n):
            nr, nl = _refresh(c, eta, rset, rpos, nr, lset, lpos, nl)
    counts[0] = nr
    counts[1] = nl
    return t, used, fired, False


def asep_evolve(cfg: AsepConfig, t_end: float, seed: SeedSpec, *, checkpoints=None,
                initial: Occupation | None = None) -> AsepTrajectory:
    """Exact continuous-time trajectory sampled at ``checkpoints`` (default: unit grid to t_end)."""
    if checkpoints is None:
        checkpoints = np.arange(0.0, np.floor(t_end) + 1.0)
    cps = np.asarray(checkpoints, dtype=float)
    if cps.size == 0 or np.any(np.diff(cps) < 0) or cps[0] < 0 or cps[-1] > t_end + 1e-12:
        raise ParameterError("checkpoints must be sorted inside [0, t_end]")
    eta = np.array((initial or sample_bernoulli(cfg, seed)).eta, dtype=np.int8)
    n = cfg.ring_size
    rset = np.empty(n, np.int64)
    lset = np.empty(n, np.int64)
    rpos = np.empty(n, np.int64)
    lpos = np.empty(n, np.int64)
    counts = np.array(_rebuild(eta, rset, rpos, lset, lpos), dtype=np.int64)
    rng = seed.generator(purpose=1)
    expo = rng.standard_exponential(RANDOM_BLOCK)
    unif = rng.random(RANDOM_BLOCK)
    pos = 0
    t = 0.0
    fields = np.empty((cps.size, n), np.int8)
    events = 0
    for i, target in enumerate(cps):
        while True:
            if pos >= RANDOM_BLOCK:
                expo = rng.standard_exponential(RANDOM_BLOCK)
                unif = rng.random(RANDOM_BLOCK)
                pos = 0
            t, used, fired, done = _run(eta, t, target, expo[pos:], unif[pos:], cfg.right_rate,
                                        cfg.left_rate, rset, rpos, lset, lpos, counts)
            pos += used
            events += fired
            if done:
                break
        fields[i] = eta
    return AsepTrajectory(cps, fields, cfg, seed, events)


def asep_two_point(trajectories, cfg: AsepConfig, lags=None, *, origin_stride: int = 1) -> CorrelationSeries:
    """S_AS(j,t) = <(eta_j(t) - 1/2)(eta_0(0) - 1/2)> with translation and time-origin averaging."""
    acc = TwoPointAccumulator(cfg, lags, origin_stride=origin_stride, center=cfg.density,
                              model="asep", with_current=False)
    for tr in trajectories:
        acc.add(tr.times, tr.fields)
    return acc.result()
