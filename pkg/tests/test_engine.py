import numpy as np
import pytest

from nmqsd.dynamics_linear import evolve_trajectory_linear
from nmqsd.dynamics_nonlinear import evolve_trajectory_nonlinear
from nmqsd.engine import available_backends, get_backend, run_batch
from nmqsd.integrator import IntegratorConfig
from nmqsd.kernels import ExpTerm, MemoryKernel
from nmqsd.model import Channel, SubsystemModel
from nmqsd.noise import make_generators
from nmqsd.operators import sigma_z
from nmqsd.presets import build_preset, preset_run, weighted_pair_state

CFG = IntegratorConfig(dt_init=1e-3)


def rich_model():
    """Two channels, complex multi-term kernels: exercises all index paths."""
    h = 0.5 * sigma_z()
    k1 = MemoryKernel((ExpTerm(0.5, 1.0, 0.8),))
    k2 = MemoryKernel((ExpTerm(0.3, 0.7, 0.4), ExpTerm(0.2, 1.5, -0.9)))
    low = np.array([[0, 0], [1, 0]], dtype=complex)
    return SubsystemModel(h, (Channel(0.6 * sigma_z(), k1), Channel(low, k2)))


@pytest.mark.parametrize("method", ["linear", "nonlinear"])
def test_batched_matches_per_trajectory(method):
    model = rich_model()
    psi0 = weighted_pair_state(2)
    grid = np.linspace(0, 2.0, 5)
    seed = 42
    indices = [0, 3, 7]
    batch = run_batch(model, psi0, method, indices, seed, grid, CFG, backend="python")
    evolve = evolve_trajectory_linear if method == "linear" else evolve_trajectory_nonlinear
    for b, j in enumerate(indices):
        gens = make_generators(model, seed, j)
        single = evolve(model, psi0, gens, grid, CFG)
        assert single.valid
        got = batch.psis[b]
        if method == "nonlinear":
            got = got / np.linalg.norm(got, axis=1)[:, None]
        assert np.max(np.abs(got - single.psis)) < 1e-11


@pytest.mark.parametrize("method", ["linear", "nonlinear"])
def test_heun_batched_matches_per_trajectory(method):
    model = rich_model()
    psi0 = weighted_pair_state(2)
    grid = np.linspace(0, 1.0, 3)
    cfg = IntegratorConfig(dt_init=1e-3, scheme="heun")
    batch = run_batch(model, psi0, method, [1], 5, grid, cfg, backend="python")
    evolve = evolve_trajectory_linear if method == "linear" else evolve_trajectory_nonlinear
    gens = make_generators(model, 5, 1)
    single = evolve(model, psi0, gens, grid, cfg)
    got = batch.psis[0]
    if method == "nonlinear":
        got = got / np.linalg.norm(got, axis=1)[:, None]
    assert np.max(np.abs(got - single.psis)) < 1e-11


@pytest.mark.skipif("compiled" not in available_backends(),
                    reason="compiled backend not built")
@pytest.mark.parametrize("method", ["linear", "nonlinear"])
def test_compiled_matches_python(method):
    model = rich_model()
    psi0 = weighted_pair_state(2)
    grid = np.linspace(0, 3.0, 7)
    a = run_batch(model, psi0, method, range(6), 9, grid, CFG, backend="python")
    b = run_batch(model, psi0, method, range(6), 9, grid, CFG, backend="compiled")
    assert np.max(np.abs(a.psis - b.psis)) < 1e-10
    assert np.array_equal(a.finite, b.finite)


@pytest.mark.skipif("compiled" not in available_backends(),
                    reason="compiled backend not built")
def test_compiled_matches_python_multichannel():
    run = preset_run("three_level_ion")
    grid = np.linspace(0, 5.0, 6)
    cfg = IntegratorConfig(dt_init=5e-3)
    a = run_batch(run.model, run.psi0, "nonlinear", range(4), 3, grid, cfg, backend="python")
    b = run_batch(run.model, run.psi0, "nonlinear", range(4), 3, grid, cfg, backend="compiled")
    assert np.max(np.abs(a.psis - b.psis)) < 1e-10


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        get_backend("fortran")


def test_batch_rejects_adaptive_config():
    run = preset_run("dephasing")
    cfg = IntegratorConfig(adaptive=True)
    with pytest.raises(ValueError):
        run_batch(run.model, run.psi0, "nonlinear", [0], 0, np.array([0.0, 1.0]), cfg)


def test_batch_deterministic_and_index_keyed():
    run = preset_run("dephasing")
    grid = np.linspace(0, 1.0, 3)
    a = run_batch(run.model, run.psi0, "nonlinear", [0, 1], 7, grid, CFG, backend="python")
    b = run_batch(run.model, run.psi0, "nonlinear", [0, 1], 7, grid, CFG, backend="python")
    assert np.array_equal(a.psis, b.psis)
    # trajectory 1 alone reproduces its batch-of-two result exactly
    c = run_batch(run.model, run.psi0, "nonlinear", [1], 7, grid, CFG, backend="python")
    assert np.array_equal(a.psis[1], c.psis[0])


def test_dephasing_populations_constant_per_grid():
    # per-trajectory populations vary, but U stays diagonal: no 0<->1 mixing
    model = build_preset("dephasing")
    psi0 = np.array([1, 0], dtype=complex)
    batch = run_batch(model, psi0, "linear", range(3), 1,
                      np.linspace(0, 2, 5), CFG, backend="python")
    assert np.max(np.abs(batch.psis[:, :, 1])) < 1e-14
