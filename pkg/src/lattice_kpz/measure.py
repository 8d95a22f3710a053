"""Exact sampling of the Gaussian product measure and stationarity checks."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats as sps

from .core import ModelParameters, ParameterError, SeedSpec, SlopeField, mean_current_theory
from .ensemble import simulate_replica, map_replicas
from .sde import current, default_dt


def sample_stationary(p: ModelParameters, seed: SeedSpec, *, attempt: int = 0) -> SlopeField:
    """I.i.d. Gaussian sites with mean rho and variance 1/(2 alpha)."""
    rng = seed.generator(purpose=2 * attempt)
    return SlopeField(p.rho + math.sqrt(p.chi()) * rng.standard_normal(p.ring_size))


@dataclass
class StationarityReport:
    mean: float
    mean_se: float
    variance: float
    variance_se: float
    cdf_distance: float
    cdf_pvalue: float
    current_mean: float
    current_se: float
    current_theory: float
    blowup_rate: float
    variance_target: float
    dt: float
    t_test: float
    replicas: int

    def to_dict(self) -> dict:
        return asdict(self)


def _final_fields(p, t_test, replicas, seed, dt, workers):
    def one(r):
        tr, _ = simulate_replica(p, seed.child(r), t_end=t_test, dt=dt,
                                 checkpoints=[t_test], sampler=sample_stationary)
        return tr.fields[-1], _
    out = map_replicas(one, replicas, workers=workers)
    fields = np.array([f for f, _ in out])
    failures = sum(a for _, a in out)
    return fields, failures


def stationarity_report(p: ModelParameters, t_test: float, replicas: int, seed: SeedSpec,
                        *, dt: float | None = None, workers: int = 1) -> StationarityReport:
    """Evolve stationary samples to ``t_test`` and compare one-time statistics with the measure.

    Standard errors are taken over replicas: each replica contributes its site
    average, so spatial correlations created by the dynamics cannot shrink them.
    """
    if replicas < 100:
        raise ParameterError("stationarity_report needs at least 100 replicas")
    dt = default_dt(p) if dt is None else dt
    fields, failures = _final_fields(p, t_test, replicas, seed, dt, workers)

    site_mean = fields.mean(axis=1)
    site_var = ((fields - p.rho) ** 2).mean(axis=1)
    w = np.array([current(f, p).mean() for f in fields])
    target = p.chi()
    z = (fields.ravel() - p.rho) / math.sqrt(target)
    ks = sps.kstest(z, "norm")
    se = lambda x: float(x.std(ddof=1) / math.sqrt(x.size))
    return StationarityReport(
        mean=float(site_mean.mean()), mean_se=se(site_mean),
        variance=float(site_var.mean()), variance_se=se(site_var),
        cdf_distance=float(ks.statistic), cdf_pvalue=float(ks.pvalue),
        current_mean=float(w.mean()), current_se=se(w),
        current_theory=mean_current_theory(p),
        blowup_rate=failures / (failures + replicas),
        variance_target=target, dt=dt, t_test=t_test, replicas=replicas,
    )


def dt_allowance(coarse: StationarityReport, fine: StationarityReport) -> dict:
    """First-order (Richardson) estimate of the time-step bias of the ``fine`` run.

    For a bias linear in dt, bias(dt) = q(dt) - q(0) = q(2dt) - q(dt) when the
    coarse run used twice the step.
    """
    if not math.isclose(coarse.dt, 2 * fine.dt, rel_tol=1e-9):
        raise ParameterError("the coarse run must use twice the fine time step")
    out = {}
    for key in ("mean", "variance", "current_mean"):
        out[key] = abs(getattr(coarse, key) - getattr(fine, key))
    return out
