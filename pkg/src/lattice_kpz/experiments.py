"""End-to-end pipelines shared by the command line and the acceptance suite."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .asep import AsepConfig, asep_evolve
from .core import ModelParameters, SeedSpec
from .ensemble import check_blowup_rate, iter_replicas, simulate_replica
from .measure import sample_stationary
from .stats import (CorrelationSeries, InsufficientData, TwoPointAccumulator, VarianceSeries,
                    choose_fit_window, default_lags, fit_exponent, jackknife_exponent,
                    variance_series)

log = logging.getLogger(__name__)


def checkpoint_grid(t_end: float, spacing: float) -> np.ndarray:
    n = int(round(t_end / spacing))
    if not math.isclose(n * spacing, t_end, rel_tol=1e-12):
        raise ValueError("t_end must be a multiple of the checkpoint spacing")
    return np.arange(n + 1) * spacing


@dataclass
class EnsembleRun:
    correlations: CorrelationSeries
    failures: int
    replicas: int

    @property
    def blowup_rate(self) -> float:
        return self.failures / (self.failures + self.replicas)


def kpz_correlations(p: ModelParameters, *, replicas: int, t_end: float, dt: float,
                     spacing: float = 1.0, seed: SeedSpec, workers: int = 1, lags=None,
                     max_lag: int | None = None, current_every: int = 0) -> EnsembleRun:
    """Stationary lattice KPZ ensemble reduced to S(j,t) replica by replica."""
    cps = checkpoint_grid(t_end, spacing)
    if lags is None:
        lags = default_lags(max_lag if max_lag is not None else cps.size - 1)
    acc = TwoPointAccumulator(p, lags, with_current=current_every > 0)

    def one(r):
        tr, fails = simulate_replica(p, seed.child(r), t_end=t_end, dt=dt, checkpoints=cps,
                                     sampler=sample_stationary, current_every=current_every)
        return acc.reduce(tr.times, tr.fields, tr.current_times, tr.current_sum), fails

    failures = 0
    for red, fails in iter_replicas(one, replicas, workers=workers):
        acc.merge(red)
        failures += fails
    check_blowup_rate(failures, replicas)
    return EnsembleRun(acc.result(), failures, replicas)


def asep_correlations(cfg: AsepConfig, *, replicas: int, t_end: float, spacing: float = 1.0,
                      seed: SeedSpec, workers: int = 1, lags=None,
                      max_lag: int | None = None) -> EnsembleRun:
    cps = checkpoint_grid(t_end, spacing)
    if lags is None:
        lags = default_lags(max_lag if max_lag is not None else cps.size - 1)
    acc = TwoPointAccumulator(cfg, lags, center=cfg.density, model="asep", with_current=False)

    def one(r):
        tr = asep_evolve(cfg, t_end, seed.child(r), checkpoints=cps)
        return acc.reduce(tr.times, tr.fields)

    for red in iter_replicas(one, replicas, workers=workers):
        acc.merge(red)
    return EnsembleRun(acc.result(), 0, replicas)


@dataclass
class ExponentSummary:
    exponent: float
    exponent_err: float
    exponent_err_jackknife: float
    window: tuple
    variance: VarianceSeries

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "exponent_err": self.exponent_err,
                "exponent_err_jackknife": self.exponent_err_jackknife,
                "window": list(self.window)}


def exponent_summary(c: CorrelationSeries, *, window=None, max_rel_err: float = 0.05) -> ExponentSummary:
    var = variance_series(c)
    if window is None:
        window = choose_fit_window(var, max_rel_err=max_rel_err)
    slope, err = fit_exponent(var, window)
    try:
        _, jk = jackknife_exponent(var, window)
    except (InsufficientData, ValueError):
        jk = float("nan")
    return ExponentSummary(slope, err, jk, tuple(window), var)
