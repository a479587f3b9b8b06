"""End-to-end tests of the command-line interface."""

import json

import pytest

from spinflow.cli import main

MODEL_BLOCK = """
[model]
psi_coeffs = [0.0, 0.0, -0.5, 0.0, 0.25]
kernel = "cosine"
kernel_amplitude = 0.5
growth_exponent = 2
coercivity_coeff = 0.125
quadratic_coeff = 1.0
offset_coeff = 4.5
theta_min = -6.0
theta_max = 6.0
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_pde_run_writes_outputs(tmp_path):
    cfg = write(tmp_path, "run.toml", MODEL_BLOCK + """
[grid]
n_x = 4
n_theta = 96

[initial]
kind = "gaussian"
mean_amplitude = 0.4
variance = 0.5

[pde]
t_final = 0.05
n_samples = 3
""")
    out = tmp_path / "out"
    assert main(["pde", "--config", cfg, "--out", str(out)]) == 0
    for name in ("observables.csv", "distances.csv", "manifest.json"):
        assert (out / name).is_file()
    assert (out / "states" / "state_0000.csv").is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "pde"
    assert manifest["failed_checks"] == []
    assert set(manifest["versions"]) == {"numpy", "python", "scipy", "spinflow"}
    header = (out / "observables.csv").read_text().splitlines()[0]
    assert header == ("t,free_energy,entropy,potential,interaction,slope,"
                      "metric_derivative,fiber_mass_error,boundary_mass")


def test_pde_reruns_are_byte_identical(tmp_path):
    cfg = write(tmp_path, "run.toml", MODEL_BLOCK + """
[grid]
n_x = 4
n_theta = 64

[initial]
kind = "gaussian"

[pde]
t_final = 0.02
n_samples = 3
""")
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["pde", "--config", cfg, "--out", str(out_a)]) == 0
    assert main(["pde", "--config", cfg, "--out", str(out_b)]) == 0
    for name in ("observables.csv", "distances.csv", "states/state_0002.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_jko_run_writes_diagnostics(tmp_path):
    cfg = write(tmp_path, "run.toml", MODEL_BLOCK + """
[grid]
n_x = 2
n_theta = 96

[initial]
kind = "gaussian"

[jko]
tau = 0.05
t_final = 0.1
m_q = 32
""")
    out = tmp_path / "out"
    assert main(["jko", "--config", cfg, "--out", str(out)]) == 0
    diag = (out / "jko_diag.csv").read_text().splitlines()
    assert diag[0] == "n,objective,decrease,grad_norm,inner_iters"
    assert len(diag) == 3  # two proximal steps


def test_invalid_tau_exits_with_error(tmp_path, capsys):
    cfg = write(tmp_path, "run.toml", MODEL_BLOCK + """
[jko]
tau = 5.0
""")
    code = main(["jko", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err
    assert "tau" in err and "0.666667" in err


def test_counterexample_check_output(tmp_path, capsys):
    cfg = write(tmp_path, "run.toml", MODEL_BLOCK + """
[checks]
run = ["counterexample"]
""")
    code = main(["check", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "counterexample" in out
    assert "W^L = 1" in out


def test_unknown_check_is_config_error(tmp_path):
    cfg = write(tmp_path, "run.toml", MODEL_BLOCK + """
[checks]
run = ["bogus"]
""")
    assert main(["check", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_missing_config_file(tmp_path, capsys):
    code = main(["pde", "--config", str(tmp_path / "nope.toml")])
    assert code == 2
    assert "not found" in capsys.readouterr().err


def test_malformed_config(tmp_path, capsys):
    cfg = write(tmp_path, "run.toml", "this is not [valid toml")
    assert main(["pde", "--config", cfg]) == 2
    assert "malformed" in capsys.readouterr().err


def test_particles_divisibility_error(tmp_path, capsys):
    cfg = write(tmp_path, "run.toml", MODEL_BLOCK + """
[grid]
n_x = 4
n_theta = 32

[particles]
n_particles = 3
""")
    code = main(["particles", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 2
    assert "divide" in capsys.readouterr().err


def test_declared_check_failure_exits_one(tmp_path, capsys):
    cfg = write(tmp_path, "run.toml", MODEL_BLOCK + """
[grid]
n_x = 2
n_theta = 64

[initial]
kind = "gaussian"

[pde]
t_final = 0.01
n_samples = 2

[checks]
final_slope_below = 1e-12
""")
    out = tmp_path / "out"
    code = main(["pde", "--config", cfg, "--out", str(out)])
    assert code == 1
    assert "FAIL" in capsys.readouterr().out
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["failed_checks"]


def test_particles_run_writes_trajectories(tmp_path):
    cfg = write(tmp_path, "run.toml", MODEL_BLOCK + """
[grid]
n_x = 8
n_theta = 64

[initial]
kind = "gaussian"

[particles]
n_particles = 8
dt = 1e-3
t_final = 0.02
n_samples = 2
seeds = [0, 1]
""")
    out = tmp_path / "out"
    assert main(["particles", "--config", cfg, "--out", str(out)]) == 0
    for seed in (0, 1):
        lines = (out / f"trajectory_seed{seed}.csv").read_text().splitlines()
        assert lines[0] == "t,k,theta"
        assert len(lines) == 1 + 2 * 8


def test_dissipation_and_rate_reports(tmp_path, capsys):
    body = MODEL_BLOCK + """
[grid]
n_x = 2
n_theta = 96

[initial]
kind = "gaussian"

[pde]
t_final = 0.05
n_samples = 6

[rate]
reference = "self"
"""
    cfg = write(tmp_path, "run.toml", body)
    out = tmp_path / "diss"
    assert main(["dissipation", "--config", cfg, "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert "residual" in report
    out2 = tmp_path / "rate"
    assert main(["rate", "--config", cfg, "--out", str(out2)]) == 0
    rate = json.loads((out2 / "rate.json").read_text())
    assert rate["initial_divergence"] == pytest.approx(0.0, abs=1e-12)


def test_hydro_ladder_csv(tmp_path):
    cfg = write(tmp_path, "run.toml", MODEL_BLOCK + """
[grid]
n_x = 8
n_theta = 64

[initial]
kind = "gaussian"
mean_amplitude = 0.0
variance = 0.5
variance_amplitude = 0.2

[hydro]
site_ladder = [4, 8]
seeds = [0, 1]
t_final = 0.02
sample_times = [0.0, 0.02]
particle_dt = 1e-2
n_x_hist = 4
""")
    out = tmp_path / "out"
    assert main(["hydro-ladder", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "ladder.csv").read_text().splitlines()
    assert lines[0] == "N,t,gap,w2,seeds"
    assert len(lines) == 1 + 2 * 2
