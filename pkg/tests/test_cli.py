import json

import pytest

from lattice_kpz.cli import build_parser, main

FOCK = ["fock-verify", "--ring", "4", "--n-max", "2", "--p", "0.5"]
BOUNDS = ["bounds", "--zeta-min", "1e-6", "--zeta-max", "1e-2", "--per-decade", "6",
          "--b2-fit", "1e-6,1e-3", "--b3-fit", "1e-6,1e-3"]
SIM = ["simulate", "--ring-size", "512", "--lambda0", "1", "--nu0", "1", "--d0", "1",
       "--replicas", "16", "--t-end", "10", "--spacing", "0.25", "--max-lag", "40",
       "--fit-t-min", "0.5", "--fit-t-max", "5.25", "--current-every", "10", "--seed", "5"]


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


def _summary(d):
    return json.loads((d / "summary.json").read_text())


def test_fock_verify(tmp_path):
    assert main(FOCK + ["--output-dir", str(tmp_path)]) == 0
    s = _summary(tmp_path)
    assert s["max_abs_diff"] == 0 and s["passed"] and s["checks"]["neumann"]
    assert (tmp_path / "config.resolved").exists()


def test_bounds_outputs(tmp_path):
    code = main(BOUNDS + ["--output-dir", str(tmp_path)])
    head = (tmp_path / "bounds.csv").read_text().splitlines()
    assert head[0].startswith("# lattice_kpz ") and "config=" in head[0] and "seed=" in head[0]
    assert head[1] == "zeta,b2,b3_lower,slope_b2,slope_b3"
    assert (tmp_path / "bounds.dat").exists()
    s = _summary(tmp_path)
    assert s["b2_fit"]["exponent"] == pytest.approx(-0.5, abs=0.01)
    assert code == (0 if s["passed"] else 1)


def test_rta_outputs(tmp_path):
    args = ["rta", "--depths", "2,4", "--zeta-min", "1e-9", "--zeta-max", "1e-6",
            "--alpha-max", "10", "--output-dir", str(tmp_path)]
    main(args)
    head = (tmp_path / "rta.csv").read_text().splitlines()[1]
    assert head == "n,zeta,gamma2,d_n,slope"
    s = _summary(tmp_path)
    assert s["checks"]["alpha_closed_form"]
    assert s["prefactors"]["kpz"] == pytest.approx(0.292, abs=1e-3)


def test_simulate_artifacts_and_worker_independence(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    ca = main(SIM + ["--output-dir", str(a), "--workers", "1"])
    cb = main(SIM + ["--output-dir", str(b), "--workers", "3"])
    assert ca == cb
    fa, fb = _files(a), _files(b)
    assert fa == fb
    for name in ("correlation.csv", "variance.csv", "summary.json", "replicas.npy",
                 "variance_current.csv", "collapse.csv", "correlation.dat"):
        assert name in fa
    assert fa["correlation.csv"].decode().splitlines()[1] == "t,j,S,stderr"
    assert fa["variance.csv"].decode().splitlines()[1] == "t,var,stderr"
    s = _summary(a)
    for key in ("chi_hat", "exponent", "exponent_err", "window", "second_moment_collapsed"):
        assert key in s


def test_collapse_from_archive(tmp_path):
    src = tmp_path / "sim"
    main(SIM + ["--output-dir", str(src)])
    out = tmp_path / "col"
    main(["collapse", "--input", str(src), "--fit-t-min", "0.5", "--fit-t-max", "5.25",
          "--output-dir", str(out)])
    s = _summary(out)
    assert s["second_moment_collapsed"] == pytest.approx(_summary(src)["second_moment_collapsed"])


def test_run_with_config_file(tmp_path, monkeypatch):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("command = fock-verify\nring = 4\nn_max = 1\n")
    monkeypatch.setenv("LATTICE_KPZ_OUTPUT_DIR", str(tmp_path / "env_out"))
    assert main(["run", str(cfg)]) == 0
    assert (tmp_path / "env_out" / "summary.json").exists()


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["bounds", "--zeta-min", "-1", "--per-decade", "2", "--output-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "zeta_min" in err and "per_decade" in err
    cfg = tmp_path / "x.cfg"
    cfg.write_text("ring = 4\n")
    assert main(["run", str(cfg)]) == 2


def test_report_aggregates(tmp_path):
    main(FOCK + ["--output-dir", str(tmp_path / "f")])
    assert main(["report", "--input-dir", str(tmp_path), "--output-dir", str(tmp_path / "rep")]) == 0
    text = (tmp_path / "rep" / "report.md").read_text()
    assert "fock-verify" in text


def test_parser_lists_every_command():
    parser = build_parser()
    for cmd in ("simulate", "asep", "stationarity", "bounds", "rta", "fock-verify", "collapse", "report", "run"):
        assert parser.parse_args([cmd] + (["x.cfg"] if cmd == "run" else [])).command == cmd
