import json
import subprocess
import sys

import pytest

from dirichlet_forms import cli

HALVES = {"sequence": {"kind": "geometric", "scale": 1.0, "ratio": 0.5}, "alpha_inf": 1.0}

CONFIGS = {
    "sample": {"params": {"alphas": [1, 2], "alpha_inf": 1}, "n_samples": 5, "seed": 3},
    "moments": {"params": {"alphas": [1, 2], "alpha_inf": 1}, "n_samples": 20000, "seed": 1},
    "verify-projection": {"params": HALVES, "n": 1, "m": 3, "n_samples": 20000, "seed": 2,
                          "family": {"monomials": {"m": 2, "max_degree": 2}}},
    "check-symmetry": {"params": {"alphas": [1], "alpha_inf": 2}, "max_degree": 2},
    "gap": {"params": {"alphas": [1], "alpha_inf": 1}, "n_samples": 20000, "seed": 5},
    "certify-poincare": {"params": {"alphas": [1, 1], "alpha_inf": 1}, "n_samples": 20000},
    "certify-super-poincare": {"params": HALVES, "r_grid": [0.6, 1.0, 3.0], "n_samples": 5000,
                               "family": {"default": {"m": 2}}, "seed": 7},
    "beta-bound": {"params": HALVES, "r_grid": [0.6, 3.0], "c_n": 1.0},
    "simulate": {"params": {"alphas": [2], "alpha_inf": 2}, "steps": 20000, "burn_in": 2000,
                 "max_degree": 1, "n_batches": 10, "systematic_floor": 0.2},
}


def _write(tmp_path, name, data):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(data, indent=2))
    return path


def _run(tmp_path, command, data, name="cfg"):
    cfg = _write(tmp_path, name, data)
    out = tmp_path / f"{name}.out.json"
    code = cli.main([command, str(cfg), "-o", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() else None)


@pytest.mark.parametrize("command", sorted(CONFIGS))
def test_every_command_runs_and_is_deterministic(tmp_path, command):
    code, rep = _run(tmp_path, command, CONFIGS[command], "a")
    code2, rep2 = _run(tmp_path, command, CONFIGS[command], "b")
    assert code == 0 and rep["pass"] is True
    assert rep["schema_version"] == cli.SCHEMA_VERSION and rep["command"] == command
    for key in CONFIGS[command]:
        assert key in rep["config"]
    rep.pop("timestamp"), rep2.pop("timestamp")
    assert json.dumps(rep, sort_keys=True) == json.dumps(rep2, sort_keys=True)


def test_beta_bound_example(tmp_path):
    code, rep = _run(tmp_path, "beta-bound", {"kind": "type1", "c_n": 1, "r": 3, "params": HALVES})
    assert code == 0
    assert rep["results"][0]["bound"] == 1.0 and rep["results"][0]["n"] == 1
    # defaults are recorded
    assert rep["config"]["weights"] == {"kind": "constant", "value": 1.0}


def test_beta_bound_unreachable_fails(tmp_path):
    code, rep = _run(tmp_path, "beta-bound", {"params": HALVES, "r": 0.3})
    assert code == 1 and rep["pass"] is False


def test_verify_projection_constant(tmp_path):
    data = {"params": HALVES, "n": 1, "m": 3, "function": [[[0], 1.0]], "n_samples": 100}
    code, rep = _run(tmp_path, "verify-projection", data)
    assert code == 0
    row = rep["results"][0]
    assert row["lhs"]["mean"] == row["rhs"]["mean"] == 1.0


def test_failing_certificate_exit_one(tmp_path):
    data = dict(CONFIGS["certify-super-poincare"], c_n=1e-9)
    code, rep = _run(tmp_path, "certify-super-poincare", data)
    assert code == 1 and rep["pass"] is False


def test_certificate_csv(tmp_path):
    csv = tmp_path / "cert.csv"
    data = dict(CONFIGS["certify-super-poincare"], csv=str(csv))
    _run(tmp_path, "certify-super-poincare", data)
    assert csv.read_text().startswith("r,n,beta_hat,bound,pass\n")


def test_poincare_candidates(tmp_path):
    data = {"params": HALVES, "n": 1, "m": 4, "n_samples": 20000, "family": {"monomials": {"m": 2, "max_degree": 2}}}
    code, rep = _run(tmp_path, "certify-poincare", data)
    assert {r["candidate"] for r in rep["results"]} == {"tail", "head", "full"}
    assert code in (0, 1)


def test_config_errors_are_line_anchored(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{\n  "params": {"alphas": [1], "alpha_inf": 1},\n  "n_samples": -4\n}\n')
    assert cli.main(["sample", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert f"{cfg}:3:" in err and "n_samples" in err

    cfg.write_text('{\n  "params": {\n')
    assert cli.main(["sample", str(cfg)]) == 2
    assert f"{cfg}:" in capsys.readouterr().err

    cfg.write_text('{"r_grid": [1.0]}')
    assert cli.main(["beta-bound", str(cfg)]) == 2
    assert "missing required key 'params'" in capsys.readouterr().err

    cfg.write_text('{"params": {"alphas": [1, -1]}}')
    assert cli.main(["moments", str(cfg)]) == 2

    cfg.write_text('{"params": {"alphas": [1, 1, 1]}, "method": "quadrature"}')
    assert cli.main(["check-symmetry", str(cfg)]) == 2

    cfg.write_text('{"params": {"sequence": [1]}, "r": 1.0}')
    assert cli.main(["beta-bound", str(cfg)]) == 2
    assert cli.main(["beta-bound", str(tmp_path / "missing.json")]) == 2


def test_output_location(tmp_path, monkeypatch):
    cfg = _write(tmp_path, "exp", CONFIGS["beta-bound"])
    assert cli.main(["beta-bound", str(cfg)]) == 0
    assert (tmp_path / "exp.beta-bound.report.json").exists()

    outdir = tmp_path / "reports"
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(outdir))
    assert cli.main(["beta-bound", str(cfg)]) == 0
    assert (outdir / "exp.beta-bound.report.json").exists()


def test_trajectory_dump_flag(tmp_path):
    dump = tmp_path / "traj.csv"
    data = dict(CONFIGS["simulate"], dump_trajectory=str(dump))
    code, _ = _run(tmp_path, "simulate", data)
    assert code == 0
    assert dump.read_text().startswith("step,x1\n")


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path, "e", CONFIGS["beta-bound"])
    proc = subprocess.run(
        [sys.executable, "-m", "dirichlet_forms.cli", "beta-bound", str(cfg), "-o", str(tmp_path / "r.json")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads((tmp_path / "r.json").read_text())["pass"] is True
