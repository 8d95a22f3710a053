"""Flat ``key = value`` configuration with typed schemas per subcommand.

Precedence, lowest first: schema defaults, config file, command-line flags.
The output directory alone may also be overridden by the environment variable
``LATTICE_KPZ_OUTPUT_DIR`` (it beats the file but not an explicit flag).
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

OUTPUT_ENV = "LATTICE_KPZ_OUTPUT_DIR"


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class Key:
    kind: type
    default: object
    help: str = ""
    minimum: float | None = None
    maximum: float | None = None
    positive: bool = False


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


COMMON = {
    "seed": Key(int, 2024, "master seed", minimum=0),
    "workers": Key(int, 1, "worker threads (results do not depend on it)", minimum=1),
    "output_dir": Key(str, "out", "directory for all artifacts"),
    "svg": Key(bool, False, "also render SVG figures"),
    "checks": Key(bool, True, "evaluate acceptance checks and set the exit code"),
}

_MODEL = {
    "ring_size": Key(int, 1024, "ring size N", minimum=3),
    "lambda0": Key(float, 5.0, "nonlinearity lambda0"),
    "nu0": Key(float, 0.5, "diffusion nu0", positive=True),
    "d0": Key(float, 0.5, "noise strength D0", positive=True),
    "rho": Key(float, 0.0, "mean slope"),
}

_RUN = {
    "replicas": Key(int, 200, "number of replicas", minimum=10),
    "t_end": Key(float, 800.0, "trajectory length", positive=True),
    "spacing": Key(float, 1.0, "checkpoint spacing", positive=True),
    "max_lag": Key(int, 400, "largest lag in checkpoint units", minimum=1),
    "fit_t_min": Key(float, 0.0, "fit window start (0: automatic)", minimum=0),
    "fit_t_max": Key(float, 0.0, "fit window end (0: automatic)", minimum=0),
    "max_rel_err": Key(float, 0.05, "automatic fit window: largest relative error", positive=True),
}

SCHEMAS = {
    "simulate": {**_MODEL, **_RUN,
                 "dt": Key(float, 0.01, "time step", positive=True),
                 "current_every": Key(int, 0, "record the summed current every k steps (0: off)", minimum=0),
                 "exponent_range": Key(_floats, (1.25, 1.45), "accepted exponent interval"),
                 "collapse_tolerance": Key(float, 0.2, "relative tolerance of the collapsed second moment")},
    "collapse": {**_MODEL, **_RUN,
                 "dt": Key(float, 0.01, "time step", positive=True),
                 "input": Key(str, "", "replica archive written by simulate (empty: simulate now)"),
                 "times": Key(_floats, (), "times to rescale (empty: fit window)"),
                 "collapse_tolerance": Key(float, 0.2, "relative tolerance of the collapsed second moment")},
    "asep": {"ring_size": Key(int, 1024, "ring size N", minimum=3),
             "p": Key(float, 1.0, "asymmetry", minimum=-1.0, maximum=1.0),
             **{k: v for k, v in _RUN.items()},
             "exponent_range": Key(_floats, (1.2, 1.45), "accepted exponent interval")},
    "stationarity": {**_MODEL, "ring_size": Key(int, 256, "ring size N", minimum=3),
                     "lambda0": Key(float, 1.0, "nonlinearity lambda0"),
                     "nu0": Key(float, 1.0, "diffusion nu0", positive=True),
                     "d0": Key(float, 1.0, "noise strength D0", positive=True),
                     "dt": Key(float, 0.005, "fine time step (a 2 dt run sets the allowance)", positive=True),
                     "t_test": Key(float, 10.0, "evolution time", positive=True),
                     "replicas": Key(int, 400, "number of replicas", minimum=100),
                     "n_se": Key(float, 3.0, "standard-error band", positive=True)},
    "bounds": {"zeta_min": Key(float, 1e-9, "smallest zeta", positive=True),
               "zeta_max": Key(float, 1e-2, "largest zeta", positive=True),
               "per_decade": Key(int, 8, "grid points per decade", minimum=6),
               "lam": Key(float, 1.0, "coupling lambda"),
               "b2_fit": Key(_floats, (1e-8, 1e-4), "zeta window of the b2 slope fit"),
               "b3_fit": Key(_floats, (1e-9, 1e-6), "zeta window of the b3 slope fit")},
    "rta": {"depths": Key(_ints, (2, 4, 6, 8, 12), "depths n"),
            "zeta_min": Key(float, 1e-12, "smallest zeta", positive=True),
            "zeta_max": Key(float, 1e-8, "largest zeta", positive=True),
            "per_decade": Key(int, 8, "grid points per decade", minimum=6),
            "lam": Key(float, 1.0, "coupling lambda"),
            "alpha_max": Key(int, 64, "check the alpha recursion up to this n", minimum=1)},
    "fock-verify": {"ring": Key(int, 6, "ring size N", minimum=3, maximum=8),
                    "n_max": Key(int, 3, "largest sector", minimum=0),
                    "p": Key(float, 0.5, "asymmetry p (lambda = p)"),
                    "exact": Key(bool, True, "rational arithmetic")},
    "report": {"input_dir": Key(str, "out", "directory holding summaries of earlier runs")},
}

COMMANDS = tuple(SCHEMAS)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(key: Key, raw):
    if not isinstance(raw, str):
        return raw
    if key.kind is bool:
        return _parse_bool(raw)
    return key.kind(raw.strip())


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    problems = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"{path}:{lineno}: expected key = value")
            continue
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    if problems:
        raise ConfigError(problems)
    return out


def resolve(command: str, file_values: dict | None = None, overrides: dict | None = None,
            env=None) -> dict:
    """Merge defaults, file and flags; validate every key and report all problems together."""
    if command not in SCHEMAS:
        raise ConfigError([f"unknown command {command!r}; choose from {', '.join(COMMANDS)}"])
    env = os.environ if env is None else env
    schema = {**COMMON, **SCHEMAS[command]}
    raw = {k: v.default for k, v in schema.items()}
    problems = []
    file_values = dict(file_values or {})
    file_values.pop("command", None)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    for source in (file_values, overrides):
        for k in source:
            if k not in schema:
                problems.append(f"unknown key {k!r} for {command}")
    if env.get(OUTPUT_ENV) and "output_dir" not in overrides:
        file_values["output_dir"] = env[OUTPUT_ENV]
    resolved = {}
    for k, key in schema.items():
        val = overrides.get(k, file_values.get(k, raw[k]))
        try:
            val = _convert(key, val)
        except (TypeError, ValueError) as exc:
            problems.append(f"{k}: {exc}")
            continue
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            if not math.isfinite(val):
                problems.append(f"{k}: must be finite")
            if key.positive and not val > 0:
                problems.append(f"{k}: must be > 0")
            if key.minimum is not None and val < key.minimum:
                problems.append(f"{k}: must be >= {key.minimum}")
            if key.maximum is not None and val > key.maximum:
                problems.append(f"{k}: must be <= {key.maximum}")
        resolved[k] = val
    problems.extend(_cross_checks(command, resolved))
    if problems:
        raise ConfigError(problems)
    resolved["command"] = command
    return resolved


def _cross_checks(command, cfg) -> list[str]:
    out = []
    if "zeta_min" in cfg and "zeta_max" in cfg and cfg.get("zeta_min", 0) >= cfg.get("zeta_max", 1):
        out.append("zeta_min must be below zeta_max")
    if command == "fock-verify" and cfg.get("n_max", 0) > cfg.get("ring", 0):
        out.append("n_max must not exceed ring")
    for k in ("exponent_range",):
        if k in cfg and (len(cfg[k]) != 2 or cfg[k][0] >= cfg[k][1]):
            out.append(f"{k}: need two increasing numbers")
    if cfg.get("fit_t_max", 0) and cfg.get("fit_t_min", 0) >= cfg["fit_t_max"]:
        out.append("fit_t_min must be below fit_t_max")
    return out


def canonical(cfg: dict) -> str:
    """Stable text form used for the echo file and the hash (output location excluded)."""
    body = {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(cfg.items())
            if k not in ("output_dir", "workers")}
    return json.dumps(body, sort_keys=True)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical(cfg).encode()).hexdigest()[:16]


def format_config(cfg: dict) -> str:
    lines = []
    for k in sorted(cfg):
        v = cfg[k]
        if isinstance(v, tuple):
            v = ",".join(repr(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
