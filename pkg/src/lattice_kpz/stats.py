"""Two-point function estimation, variance, exponents, Green-Kubo, KPZ collapse.

S(j,t) is estimated per replica by circular cross-correlation of the field at
a time origin with the field a lag later, averaged over all ring origins and
over time origins along the (stationary) trajectory.  Error bars come from
the scatter between replicas only.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import ModelParameters, ParameterError, mean_current_theory

log = logging.getLogger(__name__)

KPZ_SECOND_MOMENT = 0.510523
MIN_REPLICAS = 10
WINDOW_FACTOR = 5.0
MIN_WINDOW = 8


class SpreadExceedsRing(RuntimeError):
    """sqrt(Var) reached N/8; ``series`` holds the valid leading part."""

    def __init__(self, message, series=None):
        super().__init__(message)
        self.series = series


class InsufficientData(ValueError):
    pass


def default_lags(max_lag: int, per_decade: int = 10) -> np.ndarray:
    """0 plus roughly log-spaced integer lags up to ``max_lag``."""
    if max_lag < 1:
        return np.array([0])
    n = max(2, int(math.ceil(per_decade * math.log10(max_lag))) + 1)
    lags = np.unique(np.rint(np.geomspace(1, max_lag, n)).astype(int))
    return np.concatenate([[0], lags])


def _uniform_spacing(times: np.ndarray) -> float:
    if times.size < 2:
        return 1.0
    d = np.diff(times)
    if np.max(np.abs(d - d[0])) > 1e-9 * max(1.0, d[0]):
        raise ParameterError("checkpoints must be uniformly spaced for time-origin averaging")
    return float(d[0])


def _lagged_products(x: np.ndarray, lags, stride: int) -> np.ndarray:
    """mean over origins o of conj(x[o]) * x[o+L] for each lag L (rows of x are rfft's)."""
    out = np.empty((len(lags), x.shape[1]), dtype=complex)
    n = x.shape[0]
    for i, lag in enumerate(lags):
        origins = np.arange(0, n - lag, stride)
        if origins.size == 0:
            raise ParameterError(f"lag {lag} exceeds the trajectory length")
        out[i] = np.mean(np.conj(x[origins]) * x[origins + lag], axis=0)
    return out


def _autocorr_sums(x: np.ndarray, max_lag: int):
    """Sum_o x_o x_{o+s} and sum_o (x_o + x_{o+s}) over valid origins, s = 0..max_lag."""
    m = x.size
    size = 1 << int(math.ceil(math.log2(2 * m)))
    f = np.fft.rfft(x, size)
    prod = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1]
    c = np.concatenate([[0.0], np.cumsum(x)])
    s = np.arange(max_lag + 1)
    lin = (c[m - s] - c[0]) + (c[m] - c[s])
    return prod, lin, (m - s).astype(float)


@dataclass
class CurrentCorrelation:
    """Per-replica space-summed current autocorrelation C(s) = <dW(0) dW(s)>/N."""

    lags: np.ndarray
    replicas: np.ndarray = field(repr=False)

    def mean(self) -> np.ndarray:
        return self.replicas.mean(axis=0)


@dataclass
class CorrelationSeries:
    """Estimated S(j,t) on lag times ``times`` and offsets j in [-N/2, N/2)."""

    times: np.ndarray
    offsets: np.ndarray
    s_jt: np.ndarray
    stderr: np.ndarray
    chi_hat: float
    params: ModelParameters
    replicas: np.ndarray = field(repr=False, default=None)
    site_variance: float = float("nan")
    current: CurrentCorrelation | None = field(default=None, repr=False)
    model: str = "kpz"

    @property
    def n_replicas(self) -> int:
        return 0 if self.replicas is None else self.replicas.shape[0]

    def at(self, j: int, i_time: int) -> tuple[float, float]:
        k = int(np.searchsorted(self.offsets, j))
        return float(self.s_jt[i_time, k]), float(self.stderr[i_time, k])

    def sums(self):
        """(Sum_j S, s.e.) and (Sum_j j S, s.e.) per time, from replica scatter."""
        r = self.replicas
        tot = r.sum(axis=2)
        first = (r * self.offsets).sum(axis=2)
        se = lambda a: a.std(axis=0, ddof=1) / math.sqrt(a.shape[0])
        return (tot.mean(0), se(tot)), (first.mean(0), se(first))

    def rows(self):
        for i, t in enumerate(self.times):
            for k, j in enumerate(self.offsets):
                yield float(t), int(j), float(self.s_jt[i, k]), float(self.stderr[i, k])


@dataclass
class ReplicaReduction:
    """Everything the ensemble estimate needs from one trajectory."""

    spacing: float
    lags: np.ndarray
    profile: np.ndarray = field(repr=False)      # (lags, N), centred at the provisional centre
    mean: float = 0.0                            # spatial mean of the centred field (conserved)
    current: np.ndarray | None = field(default=None, repr=False)
    current_lin: np.ndarray | None = field(default=None, repr=False)
    current_spacing: float | None = None


def reduce_replica(times, fields, lags, *, center: float, origin_stride: int = 1,
                   current_times=None, current_sum=None, current_center: float = 0.0) -> ReplicaReduction:
    """Time-origin and translation averaged lagged products of one trajectory."""
    times = np.asarray(times, dtype=float)
    spacing = _uniform_spacing(times)
    lags = np.asarray(lags, dtype=int)
    x = np.asarray(fields, dtype=float) - center
    n = x.shape[1]
    f = np.fft.rfft(x, axis=1)
    prod = _lagged_products(f, lags, int(origin_stride))
    red = ReplicaReduction(spacing, lags, np.fft.irfft(prod, n=n, axis=1) / n, float(x[0].mean()))
    if current_sum is not None:
        csum = np.asarray(current_sum, dtype=float)
        dt_c = _uniform_spacing(np.asarray(current_times, dtype=float))
        max_lag = min(int(round(lags[-1] * spacing / dt_c)), csum.size - 1)
        cprod, lin, cnt = _autocorr_sums(csum - current_center, max_lag)
        red.current, red.current_lin, red.current_spacing = cprod / cnt, lin / cnt, dt_c
    return red


class TwoPointAccumulator:
    """Ordered merge of per-replica reductions; trajectories never need to coexist."""

    def __init__(self, params, lags=None, *, origin_stride: int = 1,
                 center: float | None = None, model: str = "kpz", with_current: bool = True):
        self.params = params
        self.lags = None if lags is None else np.asarray(lags, dtype=int)
        self.stride = int(origin_stride)
        self.center = params.rho if center is None else center
        self.model = model
        self.with_current = with_current
        self.spacing = None
        self._raw = []
        self._means = []
        self._cur = []
        self._cur_lin = []
        self._cur_spacing = None

    def current_center(self) -> float:
        return self.params.ring_size * mean_current_theory(self.params)

    def reduce(self, times, fields, current_times=None, current_sum=None) -> ReplicaReduction:
        lags = self.lags if self.lags is not None else default_lags(len(times) - 1)
        use_current = self.with_current and current_sum is not None
        return reduce_replica(times, fields, lags, center=self.center, origin_stride=self.stride,
                              current_times=current_times if use_current else None,
                              current_sum=current_sum if use_current else None,
                              current_center=self.current_center() if use_current else 0.0)

    def merge(self, red: ReplicaReduction) -> None:
        if self.spacing is None:
            self.spacing = red.spacing
            self.lags = red.lags
        elif not math.isclose(red.spacing, self.spacing) or not np.array_equal(red.lags, self.lags):
            raise ParameterError("all replicas must share the checkpoint grid and lags")
        self._raw.append(red.profile)
        self._means.append(red.mean)
        if red.current is not None:
            self._cur_spacing = red.current_spacing
            self._cur.append(red.current)
            self._cur_lin.append(red.current_lin)

    def add(self, times, fields, current_times=None, current_sum=None) -> None:
        self.merge(self.reduce(times, fields, current_times, current_sum))

    def add_trajectory(self, tr) -> None:
        self.add(tr.times, tr.fields, tr.current_times, tr.current_sum)

    def result(self) -> CorrelationSeries:
        r = len(self._raw)
        if r < MIN_REPLICAS:
            raise InsufficientData(f"need at least {MIN_REPLICAS} replicas, got {r}")
        raw = np.array(self._raw)
        m = np.array(self._means)
        delta = m.mean()  # ensemble mean slope minus the provisional center
        reps = raw - 2.0 * delta * m[:, None, None] + delta ** 2
        n = reps.shape[2]
        order = np.fft.fftshift(np.arange(n))
        offsets = np.arange(n)[order]
        offsets = np.where(offsets >= n - n // 2, offsets - n, offsets)
        reps = reps[:, :, order]
        mean = reps.mean(axis=0)
        se = reps.std(axis=0, ddof=1) / math.sqrt(r)
        # For a product-measure start S(j,0) = chi delta_j0, so the site variance
        # estimates chi with relative error sqrt(2/(N R)).  Summing over j would
        # add each replica's conserved zero mode N*mean^2 (relative scatter sqrt(2/R)).
        chi_hat = float(mean[0][offsets == 0][0])
        site_var = float(mean[0][offsets == 0][0])
        cur = None
        if self._cur:
            k = min(len(c) for c in self._cur)
            c_raw = np.array([c[:k] for c in self._cur])
            lin = np.array([c[:k] for c in self._cur_lin])
            n_ring = self.params.ring_size
            w_mean = np.mean(lin[:, 0]) / 2.0  # mean of W minus the theoretical centre
            creps = (c_raw - w_mean * lin + w_mean ** 2) / n_ring
            cur = CurrentCorrelation(lags=np.arange(k) * self._cur_spacing, replicas=creps)
        return CorrelationSeries(times=self.lags * self.spacing, offsets=offsets, s_jt=mean,
                                 stderr=se, chi_hat=chi_hat, params=self.params, replicas=reps,
                                 site_variance=site_var, current=cur, model=self.model)


def estimate_two_point(trajectories, p: ModelParameters, lags=None, *, origin_stride: int = 1,
                       model: str = "kpz") -> CorrelationSeries:
    """Ensemble estimate of S(j,t) from stationary trajectories (any iterable)."""
    acc = TwoPointAccumulator(p, lags, origin_stride=origin_stride, model=model)
    for tr in trajectories:
        acc.add_trajectory(tr)
    return acc.result()


@dataclass
class VarianceSeries:
    t: np.ndarray
    var: np.ndarray
    stderr: np.ndarray
    window: np.ndarray
    replicas: np.ndarray = field(repr=False, default=None)
    ring_size: int = 0
    truncated: bool = False

    def __iter__(self):
        return iter(zip(self.t.tolist(), self.var.tolist(), self.stderr.tolist()))

    def __len__(self):
        return self.t.size

    def take(self, mask) -> "VarianceSeries":
        reps = None if self.replicas is None else self.replicas[:, mask]
        return VarianceSeries(self.t[mask], self.var[mask], self.stderr[mask], self.window[mask],
                              reps, self.ring_size, self.truncated)


def _window_for(mean_profile, d2, dist, n, chi, factor, start=MIN_WINDOW):
    w = start
    for _ in range(64):
        var = float(np.sum(mean_profile * d2 * (dist <= w))) / chi
        want = int(math.ceil(factor * math.sqrt(max(var, 0.0))))
        want = min(max(want, MIN_WINDOW), n // 2)
        if want <= w:
            return w
        w = want
    return w


def variance_series(c: CorrelationSeries, *, strict: bool = False,
                    window_factor: float | None = None) -> VarianceSeries:
    """Var(t) = chi^-1 sum_j j^2 S(j,t) with j the minimal-image offset.

    Two variance reductions, neither changing the expectation:
    each replica's equal-time profile is subtracted (sum_j j^2 S(j,0) has mean
    zero, and the subtraction cancels the replica's conserved zero mode), and
    the sum runs over |j| <= W with W about five current spreads, beyond which
    S carries no weight but the estimator still collects noise.
    """
    factor = WINDOW_FACTOR if window_factor is None else window_factor
    n = c.offsets.size
    dist = np.abs(c.offsets)
    d2 = dist.astype(float) ** 2
    diff = c.replicas - c.replicas[:, :1, :]
    chi = c.chi_hat
    mean_diff = diff.mean(axis=0)
    # Grow the window self-consistently, continuing from the previous time: a
    # small window can otherwise be a spurious fixed point for a wide profile.
    windows = []
    for i in range(len(c.times)):
        start = windows[-1] if windows else MIN_WINDOW
        windows.append(_window_for(mean_diff[i], d2, dist, n, chi, factor, start))
    windows = np.array(windows)
    per_rep = np.stack([np.sum(diff[:, i, :] * d2 * (dist <= windows[i]), axis=1) / chi
                        for i in range(len(c.times))], axis=1)
    var = per_rep.mean(axis=0)
    se = per_rep.std(axis=0, ddof=1) / math.sqrt(per_rep.shape[0])
    series = VarianceSeries(np.asarray(c.times, float), var, se, windows, per_rep, n)
    bad = np.nonzero(np.sqrt(np.maximum(var, 0.0)) >= n / 8.0)[0]
    if bad.size:
        keep = np.arange(len(c.times)) < bad[0]
        short = series.take(keep)
        short.truncated = True
        msg = f"spread reached N/8 at t={c.times[bad[0]]:g}; series truncated"
        if strict:
            raise SpreadExceedsRing(msg, short)
        log.warning(msg)
        return short
    return series


def _as_arrays(series):
    if isinstance(series, VarianceSeries):
        return series.t, series.var, series.stderr
    rows = [tuple(r) for r in series]
    t = np.array([r[0] for r in rows], float)
    v = np.array([r[1] for r in rows], float)
    se = np.array([r[2] if len(r) > 2 else 0.0 for r in rows], float)
    return t, v, se


def fit_exponent(series, window: tuple[float, float]) -> tuple[float, float]:
    """Slope of log Var against log t over ``window``, with its standard error.

    Points are weighted by their relative standard errors when those are all
    positive; the slope error is inflated by sqrt(reduced chi^2) when the
    scatter exceeds the error bars.
    """
    t, v, se = _as_arrays(series)
    lo, hi = window
    m = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12)) & (t > 0)
    if m.sum() < 8:
        raise InsufficientData(f"fit window {window} holds {int(m.sum())} points; need 8")
    t, v, se = t[m], v[m], se[m]
    if t.max() / t.min() < 10 * (1 - 1e-9):
        raise InsufficientData("fit window must span at least one decade")
    if np.any(v <= 0):
        raise InsufficientData("non-positive variance inside the fit window")
    x, y = np.log(t), np.log(v)
    weighted = np.all(se > 0)
    wts = (v / se) ** 2 if weighted else np.ones_like(x)
    X = np.column_stack([np.ones_like(x), x])
    A = X.T @ (wts[:, None] * X)
    coef = np.linalg.solve(A, X.T @ (wts * y))
    resid = y - X @ coef
    dof = x.size - 2
    chi2 = float(np.sum(wts * resid ** 2)) / dof
    cov = np.linalg.inv(A)
    scale = max(chi2, 1.0) if weighted else chi2
    return float(coef[1]), float(math.sqrt(cov[1, 1] * scale))


def jackknife_exponent(series: VarianceSeries, window) -> tuple[float, float]:
    """Exponent with a delete-one-replica jackknife error (accounts for correlated times)."""
    if series.replicas is None:
        raise InsufficientData("series carries no replica data")
    lo, hi = window
    m = (series.t >= lo * (1 - 1e-12)) & (series.t <= hi * (1 + 1e-12)) & (series.t > 0)
    reps = series.replicas[:, m]
    r = reps.shape[0]
    x = np.log(series.t[m])
    full = np.polyfit(x, np.log(reps.mean(axis=0)), 1)[0]
    tot = reps.sum(axis=0)
    jk = np.array([np.polyfit(x, np.log((tot - reps[i]) / (r - 1)), 1)[0] for i in range(r)])
    err = math.sqrt((r - 1) / r * np.sum((jk - jk.mean()) ** 2))
    return float(full), float(err)


def choose_fit_window(series: VarianceSeries, *, max_rel_err: float = 0.05,
                      min_points: int = 8) -> tuple[float, float]:
    """Latest one-decade window where every point is inside the spread guard and
    measured to ``max_rel_err`` relative precision."""
    t, v, se = series.t, series.var, series.stderr
    ok = (t > 0) & (v > 0) & (se <= max_rel_err * np.abs(v))
    if series.ring_size:
        ok &= np.sqrt(np.maximum(v, 0)) < series.ring_size / 8.0
    for hi in sorted(t[t > 0], reverse=True):
        below = t[(t > 0) & (t <= hi / 10.0 * (1 + 1e-12))]
        if below.size == 0:
            break
        lo = below.max()
        m = (t >= lo) & (t <= hi)
        if m.sum() >= min_points and np.all(ok[m]):
            return float(lo), float(hi)
    raise InsufficientData("no decade of precise, guard-satisfying points")


def variance_via_current(source, p: ModelParameters, times=None):
    """Var(t) from the current-current correlation (Green-Kubo form).

    chi Var(t) = 2 t nu0 <u^2> + 2 int_0^t ds int_0^s ds' C(s'),
    C(s) = sum_j <(w_0 - <w>) (w_j(s) - <w>)>, with both integrals done by the
    trapezoid rule on the recorded current grid.  ``source`` is a
    CorrelationSeries built from trajectories that recorded the summed current,
    or an iterable of such trajectories.  Returns (t, Var, stderr) arrays.
    """
    c = source if isinstance(source, CorrelationSeries) else estimate_two_point(source, p)
    if c.current is None:
        raise InsufficientData("trajectories did not record the summed current")
    lags = c.current.lags
    creps = c.current.replicas
    h = lags[1] - lags[0] if lags.size > 1 else 1.0
    first = np.concatenate([np.zeros((creps.shape[0], 1)),
                            np.cumsum(0.5 * h * (creps[:, 1:] + creps[:, :-1]), axis=1)], axis=1)
    second = np.concatenate([np.zeros((creps.shape[0], 1)),
                             np.cumsum(0.5 * h * (first[:, 1:] + first[:, :-1]), axis=1)], axis=1)
    t = lags if times is None else np.asarray(times, float)
    t = t[t <= lags[-1] + 1e-12]
    sec = np.array([np.interp(t, lags, s) for s in second])
    site_var = c.replicas[:, 0, c.offsets == 0][:, 0]
    var_reps = (2.0 * t[None, :] * p.nu0 * site_var[:, None] + 2.0 * sec) / c.chi_hat
    return t, var_reps.mean(axis=0), var_reps.std(axis=0, ddof=1) / math.sqrt(var_reps.shape[0])


def kpz_scale(t, lambda0: float, chi: float):
    """(2 lambda0^2 chi t^2)^(1/3), the KPZ spreading length."""
    return (2.0 * lambda0 ** 2 * chi * np.asarray(t, float) ** 2) ** (1.0 / 3.0)


@dataclass
class Collapse:
    rows: list                 # (x, f_hat, t)
    times: np.ndarray
    norms: np.ndarray          # sum of the rescaled profile times dx, should be 1
    norm_err: np.ndarray
    second_moment: np.ndarray  # Var(t) / scale(t)^2
    second_moment_err: np.ndarray
    residual: np.ndarray       # L1 distance to the profile at the next time


def scaling_collapse(c: CorrelationSeries, variance: VarianceSeries | None = None,
                     times=None) -> Collapse:
    """Rescale profiles by the KPZ length; compare second moments with <x^2>_KPZ."""
    lam0 = c.params.lambda0
    if lam0 == 0:
        raise ParameterError("the KPZ collapse needs lambda0 != 0")
    var = variance_series(c) if variance is None else variance
    sel = np.array([i for i, t in enumerate(c.times) if t > 0 and (times is None or
                    np.any(np.isclose(t, times)))])
    sel = np.array([i for i in sel if np.any(np.isclose(var.t, c.times[i]))], dtype=int)
    if sel.size < 3:
        raise InsufficientData("scaling collapse needs at least three times")
    chi = c.chi_hat
    rows, norms, nerr, m2, m2e = [], [], [], [], []
    grid = np.linspace(-3.0, 3.0, 241)
    profiles = []
    tot = c.replicas.sum(axis=2)
    for i in sel:
        t = c.times[i]
        scale = float(kpz_scale(t, lam0, chi))
        x = c.offsets / scale
        f = scale * c.s_jt[i] / chi
        rows.extend(zip(x.tolist(), f.tolist(), [float(t)] * x.size))
        norms.append(float(tot[:, i].mean() / chi))
        nerr.append(float(tot[:, i].std(ddof=1) / math.sqrt(tot.shape[0]) / chi))
        k = int(np.argmin(np.abs(var.t - t)))
        m2.append(var.var[k] / scale ** 2)
        m2e.append(var.stderr[k] / scale ** 2)
        profiles.append(np.interp(grid, x, f, left=0.0, right=0.0))
    dx = grid[1] - grid[0]
    resid = [float(np.sum(np.abs(profiles[k + 1] - profiles[k])) * dx) for k in range(len(profiles) - 1)]
    resid.append(float("nan"))
    return Collapse(rows, c.times[sel], np.array(norms), np.array(nerr), np.array(m2),
                    np.array(m2e), np.array(resid))


def heat_kernel_correlation(offsets, t: float, p: ModelParameters) -> np.ndarray:
    """Exact S(j,t) of the linear (lambda0 = 0) equation on the ring.

    chi/N sum_k exp(i 2 pi k j / N) exp(-nu0 omega(k/N) t); the k=0 term is the
    conserved zero mode.
    """
    n = p.ring_size
    k = np.arange(n) / n
    decay = np.exp(-p.nu0 * 2.0 * (1.0 - np.cos(2 * np.pi * k)) * t)
    prof = np.real(np.fft.ifft(decay)) * p.chi()
    return prof[np.mod(np.asarray(offsets), n)]
