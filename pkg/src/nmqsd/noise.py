"""Complex colored noise built from exactly-discretized Ornstein-Uhlenbeck
components.

The driving noise of one coupling channel is z_t = sum_j xi_j(t), with one
complex OU component per kernel term.  Components are kept stationary with
E[|xi_j|^2] = A_j and E[xi_j^2] = 0, which gives

    E[z(t)* z(s)] = alpha(t - s)   for t >= s,      E[z(t) z(s)] = 0,

where alpha is the channel's memory kernel.  Reproducing exactly this
correlation (kernel phase exp(-i*freq*dt) for t > s) requires the component
drift  d xi = -(decay - i*freq) xi dt + sqrt(2*decay*A) dW:  the stationary
two-time correlation of an OU process carries the conjugate of its drift
phase.  Updates use the exact conditional distribution, so the noise has no
time-discretization bias at any step size.

Streams are counter-based (Philox) and keyed by (master seed, trajectory
index, channel index); a given trajectory's noise path is bit-reproducible
and independent of how work is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import MemoryKernel, eval_exp_kernel

_CHANNEL_BITS = 20


def trajectory_stream(master_seed: int, traj_index: int, channel: int = 0) -> np.random.Generator:
    """Independent counter-based RNG stream for one trajectory channel."""
    if not (0 <= channel < 2 ** _CHANNEL_BITS):
        raise ValueError(f"channel index out of range: {channel}")
    if traj_index < 0:
        raise ValueError(f"trajectory index must be >= 0, got {traj_index}")
    key = np.array([np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64((traj_index << _CHANNEL_BITS) | channel)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class NoiseSample:
    """Noise value at one instant: z and the per-component values."""

    z: complex
    components: np.ndarray

    def __post_init__(self):
        if abs(self.z - self.components.sum()) > 1e-12 * (1 + abs(self.z)):
            raise ValueError("z must equal the sum of its components")


class NoiseGenerator:
    """Per-channel colored noise state for one trajectory.

    Draw order from the underlying stream is fixed: burn-in consumes one
    (m, 2) standard-normal block, each advance consumes one more.  The
    batched engine pregenerates the same blocks, so per-trajectory and
    batched paths see identical noise.
    """

    def __init__(self, kernel: MemoryKernel, rng: np.random.Generator):
        self.kernel = kernel
        self.rng = rng
        self._amp = kernel.amplitudes()
        self._decay = kernel.decays()
        # drift rate conjugate to the kernel phase; see module docstring
        self._rate = self._decay - 1j * kernel.freqs()
        self.xi = np.zeros(kernel.n_terms, dtype=complex)
        self.t = 0.0
        self._burned = False

    @property
    def value(self) -> complex:
        """z at the current time."""
        return complex(self.xi.sum())

    def burn_in(self, horizon: float | None = None, method: str = "draw",
                n_steps: int = 2000) -> "NoiseGenerator":
        """Bring the components to stationarity at t = 0.

        method="draw" (default) samples each xi_j from its exact stationary
        distribution (complex Gaussian, mean 0, variance A_j).
        method="step" starts from zero at t = -horizon and advances to 0 in
        n_steps exact updates; horizon should be several correlation times.
        """
        if method == "draw":
            n = self.rng.standard_normal((self.kernel.n_terms, 2))
            self.xi = (n[:, 0] + 1j * n[:, 1]) * np.sqrt(self._amp / 2.0)
        elif method == "step":
            if horizon is None or horizon <= 0:
                raise ValueError("step burn-in needs a positive horizon")
            self.xi = np.zeros(self.kernel.n_terms, dtype=complex)
            dt = horizon / n_steps
            for _ in range(n_steps):
                self._advance_components(dt)
        else:
            raise ValueError(f"unknown burn-in method {method!r}")
        self.t = 0.0
        self._burned = True
        return self

    def _advance_components(self, dt: float) -> None:
        decay = np.exp(-self._rate * dt)
        var = self._amp * (1.0 - np.exp(-2.0 * self._decay * dt))
        n = self.rng.standard_normal((self.kernel.n_terms, 2))
        self.xi = self.xi * decay + (n[:, 0] + 1j * n[:, 1]) * np.sqrt(var / 2.0)

    def advance(self, dt: float) -> NoiseSample:
        """Exact OU update by dt > 0; returns the new sample."""
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self._advance_components(dt)
        self.t += dt
        return self.sample()

    def sample(self) -> NoiseSample:
        return NoiseSample(z=self.value, components=self.xi.copy())

    def checkpoint(self):
        """Snapshot (time, components, stream state) for step rejection."""
        return (self.t, self.xi.copy(), self.rng.bit_generator.state)

    def restore(self, state) -> None:
        self.t, xi, rng_state = state
        self.xi = xi.copy()
        self.rng.bit_generator.state = rng_state


def make_generators(model, master_seed: int, traj_index: int,
                    burn_method: str = "draw", horizon: float | None = None) -> list[NoiseGenerator]:
    """One burned-in generator per coupling channel of a model."""
    gens = []
    for c, channel in enumerate(model.channels):
        g = NoiseGenerator(channel.kernel, trajectory_stream(master_seed, traj_index, c))
        g.burn_in(horizon=horizon, method=burn_method)
        gens.append(g)
    return gens


def sample_noise_paths(kernel: MemoryKernel, n_paths: int, grid: np.ndarray,
                       master_seed: int = 0) -> np.ndarray:
    """Sample z on a time grid for n_paths independent realizations.

    Vectorized over paths from a single master-seed stream (the per
    trajectory keying of the simulation engine is not needed for noise
    diagnostics).  Returns complex array (n_paths, len(grid)).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    rng = trajectory_stream(master_seed, 0, 0)
    m = kernel.n_terms
    amp = kernel.amplitudes()
    rate = kernel.decays() - 1j * kernel.freqs()
    n = rng.standard_normal((n_paths, m, 2))
    xi = (n[..., 0] + 1j * n[..., 1]) * np.sqrt(amp / 2.0)
    out = np.empty((n_paths, grid.size), dtype=complex)
    t = grid[0]
    out[:, 0] = xi.sum(axis=1)
    for k in range(1, grid.size):
        dt = grid[k] - t
        decay = np.exp(-rate * dt)
        sig = np.sqrt(amp * (1.0 - np.exp(-2.0 * kernel.decays() * dt)) / 2.0)
        n = rng.standard_normal((n_paths, m, 2))
        xi = xi * decay + (n[..., 0] + 1j * n[..., 1]) * sig
        out[:, k] = xi.sum(axis=1)
        t = grid[k]
    return out


def empirical_correlation(paths: np.ndarray, grid: np.ndarray):
    """Estimate E[z(t)* z(0)] from sampled paths on a common grid.

    Returns (corr, stderr): corr[k] = mean over paths of z(t_k)* z(t_0),
    stderr[k] = sqrt((Var Re + Var Im)/N), usable as a combined error scale
    for both parts.  Requires at least two paths.
    """
    paths = np.asarray(paths)
    grid = np.asarray(grid, dtype=float)
    if paths.ndim != 2:
        raise ValueError("paths must be a 2-d array (n_paths, n_times)")
    if paths.shape[1] != grid.size:
        raise ValueError(f"paths have {paths.shape[1]} samples but grid has {grid.size}")
    if paths.shape[0] < 2:
        raise ValueError("need at least two paths for an error estimate")
    prods = paths.conj() * paths[:, :1]
    corr = prods.mean(axis=0)
    n = paths.shape[0]
    var = prods.real.var(axis=0, ddof=1) + prods.imag.var(axis=0, ddof=1)
    return corr, np.sqrt(var / n)


def correlation_target(kernel: MemoryKernel, grid: np.ndarray) -> np.ndarray:
    """Kernel values on a grid of non-negative lags, for comparison plots."""
    return eval_exp_kernel(kernel, np.asarray(grid, dtype=float))
