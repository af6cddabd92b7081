"""Time stepping for the coupled noise + propagator system.

The propagator equations are treated as a random ODE driven by the colored
noise z_t: classical deterministic stages apply pathwise, while all
randomness lives in the exact Ornstein-Uhlenbeck updates of the noise
components.  Noise values at the stage times of a step are produced by
advancing the generators exactly to those times, committed sequentially;
adaptive step rejection restores the generators from a checkpoint taken at
the step start.

Schemes:
  rk4_frozen_noise - classical RK4; stage noise at t, t+dt/2 and t+dt
  heun             - trapezoidal predictor/corrector; noise at t and t+dt

Adaptive error control is by step doubling: the fine solution (two half
steps) is compared against a coarse step reusing the fine path's noise
values, and the Richardson-scaled difference on the propagator entries is
tested against abs_tol + rel_tol * max|U|.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SCHEMES = ("rk4_frozen_noise", "heun")


class IntegrationFailure(RuntimeError):
    """Step produced non-finite values or tolerances unmet at dt_min."""


@dataclass
class IntegratorConfig:
    dt_init: float = 1e-3
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    dt_min: float = 1e-7
    dt_max: float = 0.1
    scheme: str = "rk4_frozen_noise"
    adaptive: bool = False
    inv_refresh_interval: int = 100   # Newton touch-up of U^-1; 0 disables

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class IntegrationStats:
    n_steps: int = 0
    n_rejected: int = 0
    dt_final: float = 0.0


def _values(gens) -> np.ndarray:
    return np.array([g.value for g in gens], dtype=complex)


def _advance(gens, dt: float) -> None:
    for g in gens:
        g.advance(dt)


def _rk4_core(system, y, t, dt, z0, zm, ze):
    h = 0.5 * dt
    k1 = system.rhs(t, y, z0)
    k2 = system.rhs(t + h, y + h * k1, zm)
    k3 = system.rhs(t + h, y + h * k2, zm)
    k4 = system.rhs(t + dt, y + dt * k3, ze)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _heun_core(system, y, t, dt, z0, ze):
    k1 = system.rhs(t, y, z0)
    k2 = system.rhs(t + dt, y + dt * k1, ze)
    return y + 0.5 * dt * (k1 + k2)


def step(system, y: np.ndarray, gens, t: float, dt: float,
         scheme: str = "rk4_frozen_noise") -> np.ndarray:
    """One fixed step; advances the noise generators exactly to t + dt."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    z0 = _values(gens)
    if scheme == "rk4_frozen_noise":
        _advance(gens, 0.5 * dt)
        zm = _values(gens)
        _advance(gens, 0.5 * dt)
        ze = _values(gens)
        y_new = _rk4_core(system, y, t, dt, z0, zm, ze)
    elif scheme == "heun":
        _advance(gens, dt)
        ze = _values(gens)
        y_new = _heun_core(system, y, t, dt, z0, ze)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    if not np.all(np.isfinite(y_new.view(float))):
        raise IntegrationFailure(f"non-finite state after step at t={t:.6g}, dt={dt:.3g}")
    return y_new


def _attempt_doubling(system, y, gens, t, dt, scheme):
    """Fine (two half steps) and coarse solutions sharing one noise path."""
    z0 = _values(gens)
    if scheme == "rk4_frozen_noise":
        _advance(gens, 0.25 * dt)
        zq1 = _values(gens)
        _advance(gens, 0.25 * dt)
        zm = _values(gens)
        y1 = _rk4_core(system, y, t, 0.5 * dt, z0, zq1, zm)
        _advance(gens, 0.25 * dt)
        zq3 = _values(gens)
        _advance(gens, 0.25 * dt)
        ze = _values(gens)
        y_fine = _rk4_core(system, y1, t + 0.5 * dt, 0.5 * dt, zm, zq3, ze)
        y_coarse = _rk4_core(system, y, t, dt, z0, zm, ze)
        order = 4
    else:
        _advance(gens, 0.5 * dt)
        zm = _values(gens)
        y1 = _heun_core(system, y, t, 0.5 * dt, z0, zm)
        _advance(gens, 0.5 * dt)
        ze = _values(gens)
        y_fine = _heun_core(system, y1, t + 0.5 * dt, 0.5 * dt, zm, ze)
        y_coarse = _heun_core(system, y, t, dt, z0, ze)
        order = 2
    return y_fine, y_coarse, order


def integrate(system, y0: np.ndarray, gens, grid, config: IntegratorConfig):
    """Propagate y0 from grid[0], returning the state at every grid point.

    Fixed-step mode subdivides each grid interval into uniform steps of
    size ~dt_init; adaptive mode controls dt by step doubling within
    [dt_min, dt_max] and clips steps to land on grid points exactly.
    Deterministic given the generator states and config.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a strictly increasing 1-d array")
    err_slice = getattr(system, "error_slice", None)
    refresh = config.inv_refresh_interval
    can_refresh = refresh > 0 and hasattr(system, "refine_inverse")

    states = np.empty((grid.size, y0.size), dtype=complex)
    states[0] = y0
    y = y0.copy()
    stats = IntegrationStats(dt_final=config.dt_init)
    n_accepted = 0
    dt = config.dt_init

    for k in range(1, grid.size):
        t0, t1 = grid[k - 1], grid[k]
        if not config.adaptive:
            n = max(1, int(round((t1 - t0) / config.dt_init)))
            h = (t1 - t0) / n
            for i in range(n):
                y = step(system, y, gens, t0 + i * h, h, config.scheme)
                n_accepted += 1
                stats.n_steps += 1
                if can_refresh and n_accepted % refresh == 0:
                    system.refine_inverse(y)
            stats.dt_final = h
        else:
            t = t0
            while t < t1 - 1e-12 * max(1.0, abs(t1)):
                dt_try = min(dt, t1 - t, config.dt_max)
                dt_try = max(dt_try, config.dt_min)
                dt_try = min(dt_try, t1 - t)
                checkpoints = [g.checkpoint() for g in gens]
                y_fine, y_coarse, order = _attempt_doubling(system, y, gens, t, dt_try,
                                                            config.scheme)
                diff = y_fine - y_coarse
                if err_slice is not None:
                    diff = diff[err_slice]
                    scale_ref = np.max(np.abs(y_fine[err_slice]))
                else:
                    scale_ref = np.max(np.abs(y_fine))
                finite = np.all(np.isfinite(y_fine.view(float)))
                err = np.max(np.abs(diff)) / (2 ** order - 1) if finite else np.inf
                tol = config.abs_tol + config.rel_tol * scale_ref
                if finite and err <= tol:
                    y = y_fine
                    t = min(t + dt_try, t1)
                    n_accepted += 1
                    stats.n_steps += 1
                    if can_refresh and n_accepted % refresh == 0:
                        system.refine_inverse(y)
                    growth = 0.9 * (tol / max(err, 1e-300)) ** (1.0 / (order + 1))
                    dt = float(np.clip(dt_try * np.clip(growth, 0.2, 5.0),
                                       config.dt_min, config.dt_max))
                else:
                    stats.n_rejected += 1
                    for g, cp in zip(gens, checkpoints):
                        g.restore(cp)
                    if dt_try <= config.dt_min * (1 + 1e-12):
                        raise IntegrationFailure(
                            f"error {err:.3e} > tol {tol:.3e} at dt_min={config.dt_min:g}"
                            f" (t={t:.6g})")
                    dt = max(0.5 * dt_try, config.dt_min)
            stats.dt_final = dt
        states[k] = y
    return states, stats
