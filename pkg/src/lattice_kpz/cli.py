"""Command line: one experiment per invocation, reproducible artifacts in an output directory.

    lattice-kpz simulate --replicas 200 --output-dir out/kpz
    lattice-kpz bounds --zeta-min 1e-9 --zeta-max 1e-2
    lattice-kpz fock-verify --n-max 3 --ring 6 --p 0.5
    lattice-kpz run experiment.cfg          # the file names the command

Every file carries the package version, a hash of the resolved configuration
and the seed.  Outputs are byte-identical for a fixed configuration and do not
depend on the worker count.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import subprocess
import sys
import tempfile
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .config import (COMMANDS, COMMON, SCHEMAS, ConfigError, config_hash, format_config,
                     read_config_file, resolve)

log = logging.getLogger("lattice_kpz")


class RunError(RuntimeError):
    pass


@lru_cache(maxsize=1)
def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
        tag = out.stdout.strip() if out.returncode == 0 else ""
    except (OSError, subprocess.SubprocessError):
        tag = ""
    return f"{__version__}+{tag}" if tag else __version__


class Artifacts:
    """Atomic writers that stamp every file with version, config hash and seed."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.root = Path(cfg["output_dir"])
        self.root.mkdir(parents=True, exist_ok=True)
        self.meta = {"version": version_string(), "config_hash": config_hash(cfg),
                     "seed": cfg["seed"], "command": cfg["command"]}
        self.written = []

    def _header(self) -> str:
        m = self.meta
        return f"# lattice_kpz {m['version']} config={m['config_hash']} seed={m['seed']}\n"

    def _atomic(self, name: str, data: bytes) -> Path:
        path = self.root / name
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=f".{name}.")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        self.written.append(path)
        return path

    def text(self, name: str, body: str) -> Path:
        return self._atomic(name, body.encode())

    def csv(self, name: str, columns, rows, *, plot_data: bool = True) -> Path:
        buf = io.StringIO()
        buf.write(self._header())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        rows = [[_fmt(x) for x in r] for r in rows]
        w.writerows(rows)
        path = self.text(name, buf.getvalue())
        if plot_data:
            dat = io.StringIO()
            dat.write(self._header())
            dat.write("# " + " ".join(columns) + "\n")
            for r in rows:
                dat.write(" ".join(r) + "\n")
            self.text(Path(name).with_suffix(".dat").name, dat.getvalue())
        return path

    def json(self, name: str, payload: dict) -> Path:
        body = {"meta": self.meta, **payload}
        return self.text(name, json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n")

    def npy(self, name: str, array: np.ndarray) -> Path:
        buf = io.BytesIO()
        np.save(buf, np.ascontiguousarray(array), allow_pickle=False)
        return self._atomic(name, buf.getvalue())

    def svg(self, name: str, fig) -> Path:
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        return self.text(name, buf.getvalue())


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


def _figure():
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "lattice-kpz"
    import matplotlib.pyplot as plt
    return plt


# ---------------------------------------------------------------- commands

def _model_params(cfg):
    from .core import ModelParameters
    return ModelParameters(lambda0=cfg["lambda0"], nu0=cfg["nu0"], d0=cfg["d0"], rho=cfg["rho"],
                           ring_size=cfg["ring_size"])


def _fit_window(cfg):
    if cfg["fit_t_max"] > 0:
        return (cfg["fit_t_min"], cfg["fit_t_max"])
    return None


def _write_correlations(art, c, var):
    art.csv("correlation.csv", ["t", "j", "S", "stderr"], c.rows(), plot_data=True)
    art.csv("variance.csv", ["t", "var", "stderr"], list(var), plot_data=True)


def _write_replicas(art, c):
    art.npy("replicas.npy", c.replicas)
    params = c.params.to_dict()
    art.json("replicas.json", {"times": c.times, "offsets": c.offsets, "chi_hat": c.chi_hat,
                               "site_variance": c.site_variance, "params": params,
                               "model": c.model})


def load_replicas(directory):
    """CorrelationSeries rebuilt from the replica archive of a simulate or asep run."""
    from .asep import AsepConfig
    from .core import ModelParameters
    from .stats import CorrelationSeries
    directory = Path(directory)
    meta = json.loads((directory / "replicas.json").read_text())
    reps = np.load(directory / "replicas.npy", allow_pickle=False)
    r = reps.shape[0]
    if meta["model"] == "asep":
        params = AsepConfig(**meta["params"])
    else:
        params = ModelParameters(**{k: meta["params"][k] for k in ("lambda0", "nu0", "d0", "rho", "ring_size")})
    return CorrelationSeries(times=np.array(meta["times"], float), offsets=np.array(meta["offsets"]),
                             s_jt=reps.mean(0), stderr=reps.std(0, ddof=1) / math.sqrt(r),
                             chi_hat=float(meta["chi_hat"]), params=params, replicas=reps,
                             site_variance=float(meta["site_variance"]), model=meta["model"])


def _variance_svg(art, var, window, title):
    plt = _figure()
    fig, ax = plt.subplots(figsize=(5, 4))
    m = var.t > 0
    ax.errorbar(var.t[m], var.var[m], yerr=var.stderr[m], fmt="o", ms=3)
    ax.axvspan(*window, alpha=0.15)
    ax.set(xscale="log", yscale="log", xlabel="t", ylabel="Var(t)", title=title)
    art.svg("variance.svg", fig)
    plt.close(fig)


def _collapse_outputs(art, c, var, times, tolerance):
    from .stats import KPZ_SECOND_MOMENT, scaling_collapse
    col = scaling_collapse(c, var, times=times)
    art.csv("collapse.csv", ["x", "f_hat", "t"], col.rows)
    m2 = float(np.mean(col.second_moment))
    out = {"times": col.times, "norms": col.norms, "norm_err": col.norm_err,
           "second_moments": col.second_moment, "second_moment_err": col.second_moment_err,
           "second_moment_collapsed": m2, "kpz_second_moment": KPZ_SECOND_MOMENT,
           "residual": col.residual}
    check = abs(m2 / KPZ_SECOND_MOMENT - 1.0) <= tolerance
    if art.cfg["svg"]:
        plt = _figure()
        fig, ax = plt.subplots(figsize=(5, 4))
        rows = np.array(col.rows)
        for t in col.times:
            sel = rows[:, 2] == t
            ax.plot(rows[sel, 0], rows[sel, 1], label=f"t={t:g}")
        ax.set(xlim=(-3, 3), xlabel="x", ylabel="rescaled S")
        ax.legend(fontsize=6)
        art.svg("collapse.svg", fig)
        plt.close(fig)
    return out, check


def cmd_simulate(cfg, art):
    from .core import SeedSpec
    from .experiments import exponent_summary, kpz_correlations
    p = _model_params(cfg)
    run = kpz_correlations(p, replicas=cfg["replicas"], t_end=cfg["t_end"], dt=cfg["dt"],
                           spacing=cfg["spacing"], seed=SeedSpec(cfg["seed"]), workers=cfg["workers"],
                           max_lag=cfg["max_lag"], current_every=cfg["current_every"])
    c = run.correlations
    ex = exponent_summary(c, window=_fit_window(cfg), max_rel_err=cfg["max_rel_err"])
    _write_correlations(art, c, ex.variance)
    _write_replicas(art, c)
    lo, hi = cfg["exponent_range"]
    checks = {"exponent_in_range": lo < ex.exponent < hi}
    summary = {"chi_hat": c.chi_hat, **ex.to_dict(), "replicas": run.replicas,
               "blowup_rate": run.blowup_rate, "model": "kpz"}
    if p.lambda0 != 0:
        fit_times = ex.variance.t[(ex.variance.t >= ex.window[0]) & (ex.variance.t <= ex.window[1])]
        col, ok = _collapse_outputs(art, c, ex.variance, fit_times, cfg["collapse_tolerance"])
        summary.update(second_moment_collapsed=col["second_moment_collapsed"], collapse=col)
        checks["second_moment_collapsed"] = ok
    if cfg["current_every"] > 0:
        from .stats import variance_via_current
        t, v, se = variance_via_current(c, p, times=ex.variance.t)
        art.csv("variance_current.csv", ["t", "var", "stderr"], zip(t, v, se))
    if cfg["svg"]:
        _variance_svg(art, ex.variance, ex.window, "lattice KPZ")
    return summary, checks


def cmd_collapse(cfg, art):
    from .core import SeedSpec
    from .experiments import exponent_summary, kpz_correlations
    if cfg["input"]:
        c = load_replicas(cfg["input"])
    else:
        c = kpz_correlations(_model_params(cfg), replicas=cfg["replicas"], t_end=cfg["t_end"],
                             dt=cfg["dt"], spacing=cfg["spacing"], seed=SeedSpec(cfg["seed"]),
                             workers=cfg["workers"], max_lag=cfg["max_lag"]).correlations
    ex = exponent_summary(c, window=_fit_window(cfg), max_rel_err=cfg["max_rel_err"])
    times = cfg["times"] or ex.variance.t[(ex.variance.t >= ex.window[0]) & (ex.variance.t <= ex.window[1])]
    col, ok = _collapse_outputs(art, c, ex.variance, times, cfg["collapse_tolerance"])
    return {"chi_hat": c.chi_hat, **col, "window": list(ex.window)}, {"second_moment_collapsed": ok}


def cmd_asep(cfg, art):
    from .asep import AsepConfig
    from .core import SeedSpec
    from .experiments import asep_correlations, exponent_summary
    acfg = AsepConfig(cfg["ring_size"], cfg["p"])
    run = asep_correlations(acfg, replicas=cfg["replicas"], t_end=cfg["t_end"], spacing=cfg["spacing"],
                            seed=SeedSpec(cfg["seed"]), workers=cfg["workers"], max_lag=cfg["max_lag"])
    c = run.correlations
    ex = exponent_summary(c, window=_fit_window(cfg), max_rel_err=cfg["max_rel_err"])
    _write_correlations(art, c, ex.variance)
    _write_replicas(art, c)
    if cfg["svg"]:
        _variance_svg(art, ex.variance, ex.window, f"exclusion process, p={acfg.p:g}")
    lo, hi = cfg["exponent_range"]
    return ({"chi_hat": c.chi_hat, **ex.to_dict(), "replicas": run.replicas, "model": "asep"},
            {"exponent_in_range": lo < ex.exponent < hi})


def cmd_stationarity(cfg, art):
    from .core import SeedSpec
    from .measure import dt_allowance, stationarity_report
    p = _model_params(cfg)
    seed = SeedSpec(cfg["seed"])
    fine = stationarity_report(p, cfg["t_test"], cfg["replicas"], seed, dt=cfg["dt"], workers=cfg["workers"])
    coarse = stationarity_report(p, cfg["t_test"], cfg["replicas"], seed, dt=2 * cfg["dt"],
                                 workers=cfg["workers"])
    allow = dt_allowance(coarse, fine)
    k = cfg["n_se"]
    checks = {
        "mean": abs(fine.mean - p.rho) <= k * fine.mean_se + allow["mean"],
        "variance": abs(fine.variance - fine.variance_target) <= k * fine.variance_se + allow["variance"],
        "current": abs(fine.current_mean - fine.current_theory) <= k * fine.current_se + allow["current_mean"],
        "blowup_rate": fine.blowup_rate < 1e-3,
        "cdf": fine.cdf_pvalue > 1e-3,
    }
    return {"fine": fine.to_dict(), "coarse": coarse.to_dict(), "allowance": allow,
            **{k2: getattr(fine, k2) for k2 in ("mean", "variance", "cdf_distance", "current_mean",
                                                "current_theory", "blowup_rate")}}, checks


def cmd_bounds(cfg, art):
    from . import bounds as bd
    z = bd.zeta_grid(cfg["zeta_min"], cfg["zeta_max"], cfg["per_decade"])
    lam = cfg["lam"]
    y2 = np.array([bd.b2(bd.FiberKernel(x, lam)) for x in z])
    y3 = np.array([bd.b3_lower(bd.FiberKernel(x, lam)) for x in z])
    s2, s3 = bd.local_slopes(z, y2), bd.local_slopes(z, y3)
    art.csv("bounds.csv", ["zeta", "b2", "b3_lower", "slope_b2", "slope_b3"], zip(z, y2, y3, s2, s3))

    def fit(y, window):
        m = (z >= window[0] * (1 - 1e-9)) & (z <= window[1] * (1 + 1e-9))
        f = bd.asymptote_fit(np.c_[z[m], y[m]])
        return {"exponent": f.exponent, "prefactor": f.prefactor, "tail_drift": f.tail_drift,
                "window": list(window)}

    f2, f3 = fit(y2, cfg["b2_fit"]), fit(y3, cfg["b3_fit"])
    pre3 = bd.b3_prefactor(lam)
    b2_ref = bd.b2(bd.FiberKernel(1e-6, lam)) * 1e-3
    b3_ref = bd.b3_lower(bd.FiberKernel(1e-8, lam)) * 1e-2
    checks = {"b2_exponent": abs(f2["exponent"] + 0.5) <= 0.005,
              "b3_exponent": abs(f3["exponent"] + 0.25) <= 0.01,
              "b2_prefactor": abs(b2_ref / 2 ** -1.5 - 1) <= 0.01,
              "b3_prefactor": abs(b3_ref / pre3 - 1) <= 0.05,
              "sandwich": bool(np.all(y3 <= y2))}
    if cfg["svg"]:
        plt = _figure()
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.loglog(z, y2, "o-", ms=3, label="b2")
        ax.loglog(z, y3, "s-", ms=3, label="b3 lower")
        ax.set(xlabel="zeta", ylabel="bound")
        ax.legend()
        art.svg("bounds.svg", fig)
        plt.close(fig)
    return {"b2_fit": f2, "b3_fit": f3, "b2_times_sqrt_zeta_at_1e-6": b2_ref,
            "b3_times_zeta_quarter_at_1e-8": b3_ref, "b3_asymptotic_prefactor": pre3,
            "lambda": lam}, checks


def cmd_rta(cfg, art):
    from . import bounds as bd
    from . import rta
    z = bd.zeta_grid(cfg["zeta_min"], cfg["zeta_max"], cfg["per_decade"])
    lam = cfg["lam"]
    rows, fits = [], {}
    alpha = rta.alpha_seq(cfg["alpha_max"])
    for n in cfg["depths"]:
        states = [rta.gamma_recursion(n, bd.FiberKernel(x, lam)) for x in z]
        d = np.array([rta.d_n(n, bd.FiberKernel(x, lam), s) for x, s in zip(z, states)])
        slopes = bd.local_slopes(z, d)
        rows.extend((n, x, s.gamma2, y, sl) for x, s, y, sl in zip(z, states, d, slopes))
        f = bd.asymptote_fit(np.c_[z, d])
        a_n = float(rta.alpha_seq(n)[-1])
        fits[str(n)] = {"exponent": f.exponent, "alpha_n": a_n, "deviation": f.exponent + a_n,
                        "gamma2_at_zeta_max": states[-1].gamma2,
                        "deep_window": bool(states[-1].gamma2 > 100) if n > 2 else None}
    art.csv("rta.csv", ["n", "zeta", "gamma2", "d_n", "slope"], rows)
    table = rta.prefactor_table(lam)
    deepest = max(cfg["depths"])
    d_deep = rta.d_n(deepest, bd.FiberKernel(z[0], lam))
    measured = d_deep * (lam ** 2 * z[0]) ** (1 / 3)
    checks = {"alpha_closed_form": all(a == rta.alpha_closed(j + 1) for j, a in enumerate(alpha)),
              "prefactor": abs(measured / table["rta"] - 1) <= 0.05}
    if deepest >= 12:
        checks["deep_exponent"] = abs(fits[str(deepest)]["exponent"] + 1 / 3) <= 0.02
    return {"alpha": [str(a) for a in alpha], "fits": fits, "prefactors": table,
            "measured_prefactor": measured, "measured_at": {"n": deepest, "zeta": z[0]}}, checks


def cmd_fock_verify(cfg, art):
    from .fock import verify_mapping, verify_neumann
    reports, neumann = [], []
    for n in range(cfg["n_max"] + 1):
        reports.append(verify_mapping(cfg["ring"], n, cfg["p"], exact=cfg["exact"]))
        neumann.append(verify_neumann(cfg["ring"], n))
    max_diff = max(float(r["max_abs_diff"]) for r in reports)
    min_eig = min(r["min_eig"] for r in neumann)
    checks = {"mapping_exact": max_diff == 0.0 if cfg["exact"] else max_diff <= 1e-12,
              "neumann": min_eig >= -1e-10}
    return {"max_abs_diff": max_diff, "min_eig": min_eig,
            "dims": {str(r["n"]): r["dims"] for r in reports},
            "mapping": reports, "neumann": neumann}, checks


def cmd_report(cfg, art):
    root = Path(cfg["input_dir"])
    entries = {}
    for path in sorted(root.rglob("summary.json")):
        if path.parent == art.root:
            continue
        data = json.loads(path.read_text())
        entries[str(path.parent.relative_to(root))] = {
            "command": data.get("meta", {}).get("command"), "checks": data.get("checks", {}),
            "passed": data.get("passed")}
    lines = ["| run | command | passed | checks |", "|---|---|---|---|"]
    for name, e in entries.items():
        checks = ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in e["checks"].items())
        lines.append(f"| {name} | {e['command']} | {e['passed']} | {checks} |")
    art.text("report.md", "\n".join(lines) + "\n")
    all_ok = bool(entries) and all(e["passed"] for e in entries.values())
    return {"runs": entries}, {"all_runs_passed": all_ok}


HANDLERS = {"simulate": cmd_simulate, "collapse": cmd_collapse, "asep": cmd_asep,
            "stationarity": cmd_stationarity, "bounds": cmd_bounds, "rta": cmd_rta,
            "fock-verify": cmd_fock_verify, "report": cmd_report}


def execute(cfg: dict) -> int:
    """Run a resolved configuration; returns the exit status."""
    art = Artifacts(cfg)
    echo = {k: v for k, v in cfg.items() if k not in ("output_dir", "workers")}
    art.text("config.resolved", format_config(echo))
    try:
        summary, checks = HANDLERS[cfg["command"]](cfg, art)
    except ConfigError:
        raise
    except Exception as exc:
        raise RunError(f"{cfg['command']} failed in {type(exc).__module__}: {exc}") from exc
    checks = {k: bool(v) for k, v in checks.items()} if cfg["checks"] else {}
    passed = all(checks.values())
    art.json("summary.json", {**summary, "checks": checks, "passed": passed})
    for k, v in checks.items():
        log.info("check %-28s %s", k, "ok" if v else "FAIL")
    return 0 if passed else 1


def _add_options(parser, schema):
    for k, key in schema.items():
        flag = "--" + k.replace("_", "-")
        parser.add_argument(flag, dest=k, default=None, help=f"{key.help} (default {key.default!r})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lattice-kpz", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=version_string())
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the command named in a config file")
    run.add_argument("config_path")
    run.add_argument("--output-dir", dest="output_dir", default=None)
    run.add_argument("--workers", dest="workers", default=None)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"{name} experiment")
        p.add_argument("--config", dest="config_path", default=None, help="key = value file")
        _add_options(p, {**COMMON, **SCHEMAS[name]})
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    ns = vars(args)
    command = ns.pop("command")
    ns.pop("verbose")
    config_path = ns.pop("config_path", None)
    try:
        file_values = read_config_file(config_path) if config_path else {}
        if command == "run":
            command = file_values.get("command")
            if command is None:
                raise ConfigError([f"{config_path}: missing 'command' key"])
        cfg = resolve(command, file_values, ns)
        return execute(cfg)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (RunError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
