import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from nmqsd.cli import main
from nmqsd.config import ConfigError, load_config, resolve_preset
from nmqsd.kernels import (ExpTerm, MemoryKernel, eval_exp_kernel, load_kernel,
                           save_kernel, save_samples_csv)
from nmqsd.output import read_density_csv


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    return result


def test_run_writes_outputs(tmp_path, runner):
    out = tmp_path / "out"
    res = invoke(runner, ["run", "--preset", "iia", "--method", "nonlinear",
                          "--n", "64", "--seed", "3", "--t-final", "2.0",
                          "--out-dir", str(out)])
    assert res.exit_code == 0, res.output
    times, cols, rho = read_density_csv(out / "density.csv")
    assert times[0] == 0.0 and times[-1] == 2.0
    k00 = cols.index((0, 0))
    assert abs(rho[0, k00] - 5 / 7) < 1e-12
    meta = json.loads((out / "meta.json").read_text())
    assert meta["source"] == "ensemble"
    assert meta["n_failed"] == 0
    assert len(meta["config_hash"]) == 16


def test_run_byte_identical_across_workers(tmp_path, runner):
    args = ["run", "--preset", "iia", "--method", "nonlinear", "--n", "48",
            "--seed", "9", "--t-final", "1.0"]
    r1 = invoke(runner, args + ["--out-dir", str(tmp_path / "a"), "--workers", "1"])
    r2 = invoke(runner, args + ["--out-dir", str(tmp_path / "b"), "--workers", "3"])
    assert r1.exit_code == 0 and r2.exit_code == 0
    a = (tmp_path / "a" / "density.csv").read_bytes()
    b = (tmp_path / "b" / "density.csv").read_bytes()
    assert a == b


def test_run_repeat_byte_identical(tmp_path, runner):
    args = ["run", "--preset", "iib", "--method", "linear", "--n", "32",
            "--seed", "4", "--t-final", "1.0"]
    invoke(runner, args + ["--out-dir", str(tmp_path / "a")])
    invoke(runner, args + ["--out-dir", str(tmp_path / "b")])
    assert (tmp_path / "a" / "density.csv").read_bytes() == \
        (tmp_path / "b" / "density.csv").read_bytes()


def test_run_invalid_config_exit_code(tmp_path, runner):
    bad = tmp_path / "bad.yaml"
    bad.write_text("preset: not_a_preset\n")
    res = runner.invoke(main, ["run", "--config", str(bad)])
    assert res.exit_code != 0
    assert "config error" in res.output


def test_run_failure_budget_exit(tmp_path, runner):
    # absurd step size blows up every double-well trajectory
    res = runner.invoke(main, ["run", "--preset", "iva", "--n", "4",
                               "--dt", "0.1", "--t-final", "1.0",
                               "--out-dir", str(tmp_path / "x")])
    assert res.exit_code != 0
    assert "ensemble failed" in res.output


def test_oracle_constant_dephasing(tmp_path, runner):
    out = tmp_path / "orac"
    res = invoke(runner, ["oracle", "--preset", "iia", "--t-final", "4.0",
                          "--out-dir", str(out)])
    assert res.exit_code == 0, res.output
    times, cols, rho = read_density_csv(out / "density.csv")
    k00 = cols.index((0, 0))
    k11 = cols.index((1, 1))
    assert np.max(np.abs(rho[:, k00].real - 5 / 7)) < 1e-7
    assert np.max(np.abs(rho[:, k11].real - 2 / 7)) < 1e-7
    meta = json.loads((out / "meta.json").read_text())
    assert meta["source"] == "oracle"


def test_oracle_zero_coupling_unitary(tmp_path, runner):
    cfg = tmp_path / "free.yaml"
    cfg.write_text(
        "model:\n"
        "  hamiltonian: [[[0.5, 0], [0, 0]], [[0, 0], [-0.5, 0]]]\n"
        "  channels:\n"
        "    - op: [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]\n"
        "      kernel: [{amplitude: 0.5, decay: 1.0}]\n"
        "initial_state: [[0.6, 0], [0.8, 0]]\n"
        "grid: {t_final: 2.0, n_points: 9}\n")
    out = tmp_path / "orac"
    res = invoke(runner, ["oracle", "--config", str(cfg), "--cutoff", "2",
                          "--no-refine", "--out-dir", str(out)])
    assert res.exit_code == 0, res.output
    times, cols, rho = read_density_csv(out / "density.csv")
    k = cols.index((0, 0))
    assert np.max(np.abs(rho[:, k].real - 0.36)) < 1e-8


def test_noise_check_csv(tmp_path, runner):
    kpath = tmp_path / "k.txt"
    save_kernel(MemoryKernel((ExpTerm(0.5, 1.0, 0.0),)), kpath)
    out = tmp_path / "noise.csv"
    res = invoke(runner, ["noise-check", "--kernel", str(kpath), "--n", "3000",
                          "--t-final", "3.0", "--n-points", "13",
                          "--seed", "2", "--out", str(out)])
    assert res.exit_code == 0, res.output
    rows = np.loadtxt(out, delimiter=",", skiprows=1)
    t, re_c, im_c, se, re_k, im_k = rows.T
    assert np.all(np.abs(re_c - re_k) <= 4 * se)
    assert np.allclose(re_k, 0.5 * np.exp(-t))


def test_noise_check_single_path_flagged(tmp_path, runner):
    kpath = tmp_path / "k.txt"
    save_kernel(MemoryKernel((ExpTerm(0.5, 1.0, 0.0),)), kpath)
    out = tmp_path / "noise.csv"
    res = invoke(runner, ["noise-check", "--kernel", str(kpath), "--n", "1",
                          "--out", str(out)])
    assert res.exit_code == 0
    rows = np.loadtxt(out, delimiter=",", skiprows=1)
    assert np.all(np.isnan(rows[:, 3]))


def test_fit_kernel_cli_round_trip(tmp_path, runner):
    truth = MemoryKernel((ExpTerm(0.4, 0.8, 0.6), ExpTerm(0.25, 2.0, -1.3)))
    dts = np.linspace(0, 8, 161)
    save_samples_csv([(float(t), complex(v))
                      for t, v in zip(dts, eval_exp_kernel(truth, dts))],
                     tmp_path / "s.csv")
    save_kernel(truth, tmp_path / "init.txt")
    out = tmp_path / "fit.txt"
    res = invoke(runner, ["fit-kernel", "--samples", str(tmp_path / "s.csv"),
                          "--terms", "2", "--init", str(tmp_path / "init.txt"),
                          "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert "residual" in res.output
    fitted = load_kernel(out)
    assert fitted.n_terms == 2


def test_fit_kernel_empty_samples_error(tmp_path, runner):
    (tmp_path / "s.csv").write_text("dt,re,im\n")
    save_kernel(MemoryKernel((ExpTerm(1.0, 1.0, 0.0),)), tmp_path / "init.txt")
    res = runner.invoke(main, ["fit-kernel", "--samples", str(tmp_path / "s.csv"),
                               "--terms", "1", "--init", str(tmp_path / "init.txt")])
    assert res.exit_code != 0


def test_config_hash_semantics(tmp_path):
    base = load_config(None, {"preset": "iia", "seed": 1, "n_traj": 10})
    same = load_config(None, {"preset": "iia", "seed": 1, "n_traj": 10})
    other_seed = load_config(None, {"preset": "iia", "seed": 2, "n_traj": 10})
    other_dt = load_config(None, {"preset": "iia", "seed": 1, "n_traj": 10,
                                  "dt": 5e-4})
    assert base.config_hash == same.config_hash
    assert base.config_hash != other_seed.config_hash
    assert base.config_hash != other_dt.config_hash


def test_preset_aliases_resolve():
    a = resolve_preset("iic")
    b = resolve_preset("iiic")
    assert abs(a.psi0[0]) > 0 and b.psi0[0] == 0
    with pytest.raises(ConfigError):
        resolve_preset("xyz")


def test_repo_configs_parse():
    here = os.path.join(os.path.dirname(__file__), "..", "configs")
    for name in sorted(os.listdir(here)):
        setup = load_config(os.path.join(here, name))
        assert setup.n_traj >= 1
        assert setup.grid[0] == 0.0
