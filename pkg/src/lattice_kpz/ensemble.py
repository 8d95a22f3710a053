"""Replica orchestration: deterministic streams, blow-up resampling, worker pool."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .core import BlowUpError, ModelParameters, SeedSpec
from .sde import Trajectory, evolve

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 20
BLOWUP_RATE_LIMIT = 1e-3


def simulate_replica(p: ModelParameters, seed: SeedSpec, *, t_end: float, dt: float,
                     checkpoints, sampler, current_every: int = 0) -> tuple[Trajectory, int]:
    """Run one replica, resampling initial state and noise after a blow-up.

    Returns the accepted trajectory and the number of discarded attempts.
    """
    for attempt in range(MAX_ATTEMPTS):
        u0 = sampler(p, seed, attempt=attempt)
        try:
            tr = evolve(u0, t_end, dt, checkpoints, seed, p,
                        current_every=current_every, attempt=attempt)
        except BlowUpError as exc:
            log.warning("replica %d blew up at t=%.3f (attempt %d)", seed.stream_index, exc.time, attempt)
            continue
        return tr, attempt
    raise BlowUpError(f"replica {seed.stream_index} blew up {MAX_ATTEMPTS} times")


def map_replicas(func, n_replicas: int, *, workers: int = 1):
    """``[func(r) for r in range(n_replicas)]`` on a bounded thread pool.

    Results come back in replica order, so reductions are independent of the
    worker count.  The integration kernels release the GIL.
    """
    if workers <= 1:
        return [func(r) for r in range(n_replicas)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, range(n_replicas)))


def iter_replicas(func, n_replicas: int, *, workers: int = 1, chunk: int | None = None):
    """Yield ``func(r)`` in replica order, evaluating ``chunk`` replicas at a time."""
    chunk = chunk or max(1, workers)
    for start in range(0, n_replicas, chunk):
        stop = min(n_replicas, start + chunk)
        if workers <= 1:
            results = [func(r) for r in range(start, stop)]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(func, range(start, stop)))
        yield from results


def blowup_rate(failures: int, accepted: int) -> float:
    total = failures + accepted
    return failures / total if total else 0.0


def check_blowup_rate(failures: int, accepted: int) -> None:
    rate = blowup_rate(failures, accepted)
    if rate > BLOWUP_RATE_LIMIT:
        raise BlowUpError(f"blow-up rate {rate:.2e} exceeds {BLOWUP_RATE_LIMIT:.0e}")


def stack_fields(trajectories) -> np.ndarray:
    return np.stack([t.fields for t in trajectories])
