"""End-to-end acceptance criteria, each run through the command line.

Every run writes into a session directory; the determinism check repeats all of
them with a different worker count and compares the files byte for byte.
Results are printed as one line per criterion at the end of the session.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from lattice_kpz.cli import load_replicas, main
from lattice_kpz.fock import verify_mapping
from lattice_kpz.stats import heat_kernel_correlation, variance_series

pytestmark = pytest.mark.acceptance

FOCK_TRIPLES = [(4, 2, 0.5), (5, 2, 1.0), (6, 3, 0.3)]

RUNS = {
    **{f"fock_{n}_{k}_{p}": ["fock-verify", "--ring", str(n), "--n-max", str(k), "--p", str(p)]
       for n, k, p in FOCK_TRIPLES},
    **{f"neumann_{n}": ["fock-verify", "--ring", str(n), "--n-max", "3", "--p", "0.5"] for n in (3, 4, 5, 6)},
    **{f"stationarity_{lam}_{rho}": ["stationarity", "--ring-size", "256", "--lambda0", str(lam),
                                     "--nu0", "1", "--d0", "1", "--rho", str(rho), "--dt", "0.005",
                                     "--t-test", "10", "--replicas", "400"]
       for lam in (0, 1) for rho in (0, 0.5)},
    "linear": ["simulate", "--ring-size", "256", "--lambda0", "0", "--nu0", "0.5", "--d0", "0.5",
               "--replicas", "100", "--t-end", "200", "--max-lag", "50", "--exponent-range", "0.9,1.1"],
    "kpz": ["simulate", "--ring-size", "1024", "--lambda0", "5", "--nu0", "0.5", "--d0", "0.5",
            "--replicas", "200", "--t-end", "800", "--max-lag", "400"],
    "tasep": ["asep", "--ring-size", "1024", "--p", "1", "--replicas", "500", "--t-end", "1000",
              "--max-lag", "500", "--exponent-range", "1.2,1.45"],
    "ssep": ["asep", "--ring-size", "1024", "--p", "0", "--replicas", "200", "--t-end", "400",
             "--max-lag", "200", "--exponent-range", "0.9,1.1"],
    "bounds": ["bounds"],
    "rta": ["rta"],
}


class Runner:
    def __init__(self, root: Path):
        self.root = root
        self.done = {}

    def __call__(self, name: str, *, workers: int = 1, subdir: str = "first"):
        key = (name, subdir)
        if key not in self.done:
            out = self.root / subdir / name
            start = time.perf_counter()
            code = main(RUNS[name] + ["--output-dir", str(out), "--workers", str(workers)])
            self.done[key] = (out, code, time.perf_counter() - start)
        return self.done[key]

    def summary(self, name: str) -> dict:
        out, _, _ = self(name)
        return json.loads((out / "summary.json").read_text())


@pytest.fixture(scope="session")
def runner(tmp_path_factory):
    return Runner(tmp_path_factory.mktemp("acceptance"))


class Criterion:
    """Collects sub-results; records one line even when a step raises."""

    def __init__(self, table, number):
        self.table, self.number = table, number
        self.parts, self.ok = [], True

    def check(self, ok, text):
        self.ok &= bool(ok)
        self.parts.append(text if ok else f"{text} [failed]")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None:
            self.ok = False
            self.parts.append(f"error: {exc_type.__name__}: {exc}")
        self.table[self.number] = (self.ok, "; ".join(self.parts))
        if exc is None:
            assert self.ok, "; ".join(self.parts)
        return False


def test_criterion_01_mapping_identity(runner, acceptance):
    with Criterion(acceptance, 1) as c:
        start = time.perf_counter()
        reports = [verify_mapping(n, k, p, exact=True) for n, k, p in FOCK_TRIPLES]
        elapsed = time.perf_counter() - start
        for (n, k, p), rep in zip(FOCK_TRIPLES, reports):
            c.check(rep["exact"] and rep["max_abs_diff"] == 0, f"(N,n,p)=({n},{k},{p}) max|PHP-H_AS|={rep['max_abs_diff']}")
        for n, k, p in FOCK_TRIPLES:
            _, code, _ = runner(f"fock_{n}_{k}_{p}")
            c.check(code == 0, f"cli fock-verify ring={n} exit {code}")
        c.check(elapsed < 10, f"{elapsed:.2f}s")


def test_criterion_02_neumann_inequality(runner, acceptance):
    with Criterion(acceptance, 2) as c:
        total = 0.0
        worst = math.inf
        for n in (3, 4, 5, 6):
            _, code, dt = runner(f"neumann_{n}")
            total += dt
            s = runner.summary(f"neumann_{n}")
            worst = min(worst, s["min_eig"])
            c.check(s["checks"]["neumann"], f"N={n} min eig {s['min_eig']:.2e}")
        c.check(worst >= -1e-10, f"overall min eig {worst:.2e} >= -1e-10")
        c.check(total < 10, f"{total:.2f}s")


def test_criterion_03_stationarity(runner, acceptance):
    with Criterion(acceptance, 3) as c:
        for lam in (0, 1):
            for rho in (0, 0.5):
                name = f"stationarity_{lam}_{rho}"
                _, code, dt = runner(name)
                s = runner.summary(name)
                f = s["fine"]
                c.check(code == 0 and all(s["checks"].values()),
                        f"lam0={lam} rho={rho}: var {f['variance']:.4f}+-{f['variance_se']:.4f}, "
                        f"current {f['current_mean']:.4f} vs {f['current_theory']:.4f}, "
                        f"blowups {f['blowup_rate']:.0e} ({dt:.0f}s)")


def test_criterion_04_linear_oracle(runner, acceptance):
    with Criterion(acceptance, 4) as c:
        out, _, dt = runner("linear")
        corr = load_replicas(out)
        var = variance_series(corr)
        p = corr.params
        m = (var.t >= 1) & (var.t <= 50)
        z = np.abs(var.var[m] - 2 * p.nu0 * var.t[m]) / var.stderr[m]
        c.check(z.max() <= 4, f"Var=2 nu0 t on [1,50]: max z {z.max():.2f} over {m.sum()} times")
        worst = 0.0
        for i, t in enumerate(corr.times):
            if t > 50:
                break
            near = np.abs(corr.offsets) <= var.window[i]
            exact = heat_kernel_correlation(corr.offsets[near], t, p)
            zz = np.abs(corr.s_jt[i, near] - exact) / corr.stderr[i, near]
            worst = max(worst, float(zz.max()))
        c.check(worst <= 4, f"heat kernel max z {worst:.2f} inside the variance window ({dt:.0f}s)")


def _sum_rule_z(out, chi):
    corr = load_replicas(out)
    (tot, tot_se), (first, first_se) = corr.sums()
    return float(np.max(np.abs(tot - chi) / tot_se)), float(np.max(np.abs(first) / first_se)), corr.times.size


def test_criterion_05_sum_rules(runner, acceptance):
    with Criterion(acceptance, 5) as c:
        for name, chi in (("linear", 0.5), ("kpz", 0.5), ("tasep", 0.25), ("ssep", 0.25)):
            out, _, _ = runner(name)
            z0, z1, n = _sum_rule_z(out, chi)
            c.check(z0 <= 4 and z1 <= 4, f"{name}: max z {z0:.2f} (sum S) / {z1:.2f} (sum jS) at {n} times")


def test_criterion_06_superdiffusion(runner, acceptance):
    with Criterion(acceptance, 6) as c:
        _, code, dt = runner("kpz")
        s = runner.summary("kpz")
        e, err = s["exponent"], s["exponent_err"]
        c.check(1.25 < e < 1.45, f"exponent {e:.4f}+-{err:.4f} on t in {s['window']}")
        m2 = s["second_moment_collapsed"]
        c.check(abs(m2 / 0.510523 - 1) <= 0.2, f"collapsed second moment {m2:.4f} vs 0.510523")
        c.check(s["blowup_rate"] < 1e-3, f"blow-up rate {s['blowup_rate']:.1e}")
        c.check(dt <= 3600, f"{dt / 60:.1f} min")


def test_criterion_07_exclusion(runner, acceptance):
    with Criterion(acceptance, 7) as c:
        total = 0.0
        for name, lo, hi in (("tasep", 1.2, 1.45), ("ssep", 0.9, 1.1)):
            _, code, dt = runner(name)
            total += dt
            s = runner.summary(name)
            c.check(lo < s["exponent"] < hi,
                    f"{name}: exponent {s['exponent']:.4f}+-{s['exponent_err']:.4f} on t in {s['window']}")
        c.check(total <= 1800, f"{total / 60:.1f} min")


def test_criterion_08_upper_bound(runner, acceptance):
    with Criterion(acceptance, 8) as c:
        _, _, dt = runner("bounds")
        s = runner.summary("bounds")
        v = s["b2_times_sqrt_zeta_at_1e-6"]
        c.check(abs(v / 2 ** -1.5 - 1) <= 0.01, f"b2 sqrt(zeta) at 1e-6 = {v:.6f} vs 0.353553")
        e = s["b2_fit"]["exponent"]
        c.check(abs(e + 0.5) <= 0.005, f"slope {e:.5f} over {s['b2_fit']['window']}")
        c.check(dt < 60, f"{dt:.1f}s (bounds grid incl. b3)")


def test_criterion_09_lower_bound(runner, acceptance):
    with Criterion(acceptance, 9) as c:
        _, _, dt = runner("bounds")
        s = runner.summary("bounds")
        v = s["b3_times_zeta_quarter_at_1e-8"]
        c.check(abs(v / 0.0809 - 1) <= 0.05, f"b3 zeta^1/4 at 1e-8 = {v:.5f} vs 0.0809")
        e = s["b3_fit"]["exponent"]
        c.check(abs(e + 0.25) <= 0.01, f"slope {e:.4f} over {s['b3_fit']['window']}")
        c.check(s["checks"]["sandwich"], "b3_lower <= b2 on the grid")
        c.check(dt <= 300, f"{dt:.1f}s")


def test_criterion_10_rta(runner, acceptance):
    with Criterion(acceptance, 10) as c:
        _, _, dt = runner("rta")
        s = runner.summary("rta")
        c.check(s["checks"]["alpha_closed_form"] and len(s["alpha"]) == 64, "alpha recursion = closed form, n <= 64")
        e = s["fits"]["12"]["exponent"]
        c.check(abs(e + 1 / 3) <= 0.02, f"d12 exponent {e:.4f}")
        pref = s["measured_prefactor"]
        c.check(abs(pref / 0.1907 - 1) <= 0.05, f"d12 prefactor {pref:.4f} vs 0.1907")
        ratio = s["prefactors"]["ratio"]
        c.check(abs(ratio - 0.191 / 0.292) <= 0.005, f"RTA/KPZ ratio {ratio:.4f}")
        c.check(dt < 60, f"{dt:.1f}s")


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_11_determinism(runner, acceptance):
    with Criterion(acceptance, 11) as c:
        differing = []
        for name in RUNS:
            first, _, _ = runner(name)
            second, _, _ = runner(name, workers=2, subdir="second")
            a, b = _tree(first), _tree(second)
            if a != b:
                differing.append(name)
        c.check(not differing, f"{len(RUNS)} runs repeated with workers=2: "
                + ("all outputs byte-identical" if not differing else f"differences in {differing}"))
