import numpy as np
import pytest
from scipy.linalg import expm

from nmqsd.dynamics_linear import LinearSystem
from nmqsd.dynamics_nonlinear import NonlinearSystem
from nmqsd.integrator import (IntegrationFailure, IntegratorConfig, integrate,
                              step)
from nmqsd.kernels import ExpTerm, MemoryKernel
from nmqsd.model import Channel, SubsystemModel
from nmqsd.noise import make_generators
from nmqsd.operators import sigma_z
from nmqsd.presets import build_preset, weighted_pair_state

KERN = MemoryKernel((ExpTerm(0.5, 1.0, 0.0),))


class ScalarDecay:
    """du/dt = -u, for order checks; ignores noise."""

    n_state = 1
    error_slice = slice(0, 1)

    def rhs(self, t, y, z):
        return -y


class AnalyticGen:
    """Deterministic stand-in for a noise generator: z(t) is a fixed smooth
    function, so adaptive and fixed-step runs see the identical path."""

    def __init__(self, t=0.0):
        self.t = t

    @property
    def value(self):
        return complex(0.3 * np.exp(1j * self.t) + 0.1)

    def advance(self, dt):
        self.t += dt

    def checkpoint(self):
        return self.t

    def restore(self, state):
        self.t = state


class RecordingGen:
    """Wraps a NoiseGenerator, remembering z at every advance time."""

    def __init__(self, inner):
        self.inner = inner
        self.trace = {0.0: inner.value}

    @property
    def value(self):
        return self.inner.value

    def advance(self, dt):
        out = self.inner.advance(dt)
        self.trace[round(self.inner.t, 10)] = out.z
        return out


class ReplayGen:
    """Serves a recorded noise path; requested times must have been visited."""

    def __init__(self, trace):
        self.trace = trace
        self.t = 0.0

    @property
    def value(self):
        return self.trace[round(self.t, 10)]

    def advance(self, dt):
        self.t += dt
        if round(self.t, 10) not in self.trace:
            raise KeyError(f"no recorded noise at t={self.t}")


def closed_system():
    h = 0.5 * sigma_z()
    model = SubsystemModel(h, (Channel(np.zeros((2, 2)), KERN),))
    return LinearSystem(model), h


def test_rk4_scalar_order():
    sys = ScalarDecay()
    y = np.array([1.0 + 0j])
    y = step(sys, y, [], 0.0, 0.1, "rk4_frozen_noise")
    assert abs(y[0] - np.exp(-0.1)) / np.exp(-0.1) <= 1e-7


def test_heun_scalar_second_order():
    sys = ScalarDecay()
    y = np.array([1.0 + 0j])
    y = step(sys, y, [], 0.0, 0.1, "heun")
    assert abs(y[0] - np.exp(-0.1)) < 2e-4


def test_fixed_step_error_ratio_16():
    # global RK4 error on the zero-noise model shrinks 2^4 when dt halves
    system, h = closed_system()
    gens = make_generators(SubsystemModel(h, (Channel(np.zeros((2, 2)), KERN),)), 0, 0)
    grid = np.array([0.0, 1.0])
    errs = []
    for dt in (0.05, 0.025):
        states, _ = integrate(system, system.initial(), gens, grid,
                              IntegratorConfig(dt_init=dt))
        u = states[-1][:4].reshape(2, 2)
        errs.append(np.max(np.abs(u - expm(-1j * h))))
    ratio = errs[0] / errs[1]
    assert 12 < ratio < 20


def test_zero_coupling_matches_expm():
    system, h = closed_system()
    model = SubsystemModel(h, (Channel(np.zeros((2, 2)), KERN),))
    gens = make_generators(model, 0, 0)
    grid = np.linspace(0, 10, 11)
    states, _ = integrate(system, system.initial(), gens, grid,
                          IntegratorConfig(dt_init=1e-3))
    for t, s in zip(grid, states):
        u = s[:4].reshape(2, 2)
        assert np.max(np.abs(u - expm(-1j * h * t))) <= 1e-8


def test_noise_statistics_independent_of_dt():
    # exact OU update: xi marginals do not depend on the step size
    model = build_preset("dephasing")
    stats = []
    for dt in (0.05, 0.002):
        vals = []
        for k in range(400):
            (g,) = make_generators(model, 31, k)
            n = int(round(1.0 / dt))
            for _ in range(n):
                g.advance(dt)
            vals.append(abs(g.value) ** 2)
        stats.append(np.mean(vals))
    se = 0.5 * np.sqrt(2.0 / 400) * np.sqrt(2)
    assert abs(stats[0] - stats[1]) < 4 * se


def test_self_convergence_shared_noise_path():
    # halve dt with bit-identical noise values at shared stage times
    model = build_preset("dephasing")
    system = LinearSystem(model)
    psi0 = weighted_pair_state(2)
    grid = np.array([0.0, 10.0])
    for seed in (0, 3, 13):
        (gen,) = make_generators(model, seed, 0)
        rec = RecordingGen(gen)
        fine, _ = integrate(system, system.initial(), [rec], grid,
                            IntegratorConfig(dt_init=5e-4))
        coarse, _ = integrate(system, system.initial(), [ReplayGen(rec.trace)], grid,
                              IntegratorConfig(dt_init=1e-3))
        psi_f = fine[-1][:4].reshape(2, 2) @ psi0
        psi_c = coarse[-1][:4].reshape(2, 2) @ psi0
        assert np.max(np.abs(psi_f - psi_c)) <= 1e-5


def test_monotone_pathwise_convergence():
    # per-path errors fluctuate with the realization, so monotone decay under
    # halving is asserted on the rms over seeds against a 8x-finer reference
    model = build_preset("dephasing")
    system = LinearSystem(model)
    grid = np.array([0.0, 1.0])
    errs = {dt: [] for dt in (2e-3, 1e-3, 5e-4)}
    for seed in range(6):
        (gen,) = make_generators(model, seed, 0)
        rec = RecordingGen(gen)
        ref, _ = integrate(system, system.initial(), [rec], grid,
                           IntegratorConfig(dt_init=1.25e-4))
        for dt in errs:
            out, _ = integrate(system, system.initial(), [ReplayGen(rec.trace)],
                               grid, IntegratorConfig(dt_init=dt))
            errs[dt].append(np.max(np.abs(out[-1] - ref[-1])))
    rms = [np.sqrt(np.mean(np.square(errs[dt]))) for dt in (2e-3, 1e-3, 5e-4)]
    assert rms[0] > rms[1] > rms[2]


def test_adaptive_matches_fixed_on_analytic_noise():
    model = build_preset("dephasing")
    system = LinearSystem(model)
    grid = np.array([0.0, 3.0])
    fixed, _ = integrate(system, system.initial(), [AnalyticGen()], grid,
                         IntegratorConfig(dt_init=1e-4))
    adap, stats = integrate(system, system.initial(), [AnalyticGen()], grid,
                            IntegratorConfig(dt_init=1e-2, adaptive=True,
                                             rel_tol=1e-10, abs_tol=1e-13))
    assert np.max(np.abs(fixed[-1] - adap[-1])) < 1e-6
    assert stats.n_steps > 0


def test_adaptive_stochastic_deterministic():
    model = build_preset("dephasing")
    system = LinearSystem(model)
    grid = np.linspace(0, 1.0, 3)
    outs = []
    for _ in range(2):
        gens = make_generators(model, 23, 4)
        states, _ = integrate(system, system.initial(), gens, grid,
                              IntegratorConfig(dt_init=1e-3, adaptive=True,
                                               rel_tol=1e-7))
        outs.append(states)
    assert np.array_equal(outs[0], outs[1])


def test_adaptive_rejects_at_dt_min():
    class Stiff:
        n_state = 1
        error_slice = slice(0, 1)

        def rhs(self, t, y, z):
            return -1e8 * y

    cfg = IntegratorConfig(dt_init=1e-3, dt_min=9.9e-4, adaptive=True,
                           rel_tol=1e-12, abs_tol=1e-14)
    with pytest.raises(IntegrationFailure):
        integrate(Stiff(), np.array([1.0 + 0j]), [], np.array([0.0, 1.0]), cfg)


def test_nonfinite_state_raises():
    class Exploding:
        n_state = 1

        def rhs(self, t, y, z):
            return y * np.inf

    with pytest.raises(IntegrationFailure):
        step(Exploding(), np.array([1.0 + 0j]), [], 0.0, 1e-3)


def test_grid_points_hit_exactly():
    model = build_preset("dephasing")
    system = NonlinearSystem(model, weighted_pair_state(2))
    grid = np.array([0.0, 0.37, 1.0, 2.25])
    gens = make_generators(model, 2, 0)
    states, _ = integrate(system, system.initial(), gens, grid,
                          IntegratorConfig(dt_init=1e-3, adaptive=True, rel_tol=1e-6))
    assert states.shape == (4, system.n_state)
    assert np.all(np.isfinite(states.view(float)))


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(scheme="euler")
    with pytest.raises(ValueError):
        IntegratorConfig(dt_init=1e-9, dt_min=1e-3)
    with pytest.raises(ValueError):
        IntegratorConfig(rel_tol=0.0)
