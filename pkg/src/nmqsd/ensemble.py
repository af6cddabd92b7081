"""Monte Carlo ensemble runner: many independent trajectories reduced into
a density-matrix estimate with element-wise error bars.

Trajectories are keyed by (master seed, trajectory index, channel index),
partitioned into fixed-size chunks, and reduced in chunk-index order, so
results are bit-identical for a given seed and config regardless of the
worker count.  Failed trajectories (non-finite states, or norm drift beyond
the tolerance for the norm-preserving method) are excluded and counted; the
run aborts if failures exceed a configurable fraction.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics_linear import evolve_trajectory_linear
from .dynamics_nonlinear import NORM_DRIFT_LIMIT, evolve_trajectory_nonlinear
from .engine import default_backend, run_batch
from .integrator import IntegratorConfig
from .model import SubsystemModel
from .noise import make_generators

METHODS = ("linear", "nonlinear")


class EnsembleError(RuntimeError):
    pass


@dataclass
class EnsembleConfig:
    n_traj: int
    grid: np.ndarray
    master_seed: int = 0
    method: str = "nonlinear"
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    chunk_size: int = 256             # reduction granularity; not worker count
    record_indices: tuple = ()        # trajectory indices to keep, or "all"
    max_failure_fraction: float = 0.01
    backend: str | None = None
    rebase_interval: int = 0          # fold propagator into anchors every k
                                      # grid intervals; needed for long runs

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.grid.ndim != 1 or self.grid.size < 1:
            raise ValueError("grid must be a 1-d array of times")
        if self.grid[0] != 0.0 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must start at 0 and increase strictly")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if self.rebase_interval > 0 and self.integrator.adaptive:
            raise ValueError("re-basing is only supported on the fixed-step path")


@dataclass
class DensityEstimate:
    """Mean dyad per grid point with element-wise standard errors."""

    times: np.ndarray
    mean: np.ndarray      # (T, d, d) complex
    se_re: np.ndarray     # (T, d, d)
    se_im: np.ndarray
    n_valid: int

    @property
    def dim(self) -> int:
        return self.mean.shape[1]

    def element(self, i: int, j: int):
        """Series of rho_ij with (re, im) standard errors."""
        return self.mean[:, i, j], self.se_re[:, i, j], self.se_im[:, i, j]

    def trace(self) -> np.ndarray:
        return np.einsum("tii->t", self.mean)


@dataclass
class TrajectoryRecord:
    index: int
    times: np.ndarray
    psis: np.ndarray      # (T, d); normalized for the nonlinear method

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.psis, axis=1)

    def survival_amplitude(self, psi0: np.ndarray) -> np.ndarray:
        return self.psis @ np.asarray(psi0, dtype=complex).conj()

    def manifold_population(self, manifold) -> np.ndarray:
        idx = sorted(set(int(i) for i in manifold))
        return np.sum(np.abs(self.psis[:, idx]) ** 2, axis=1)


@dataclass
class SurvivalSeries:
    """Moments of the survival probability |<psi0|psi_t>|^2 over trajectories."""

    times: np.ndarray
    second: np.ndarray        # M[|a|^2]
    second_se: np.ndarray
    fourth: np.ndarray        # M[|a|^4]
    fourth_se: np.ndarray
    n: int

    @property
    def variance(self) -> np.ndarray:
        """M[|a|^4] - M[|a|^2]^2, the spread standard theory does not fix."""
        return self.fourth - self.second ** 2


@dataclass
class EnsembleResult:
    density: DensityEstimate
    survival: SurvivalSeries
    records: list
    n_failed: int
    failed_indices: list
    diagnostics: dict
    wall_time: float
    backend: str


def _chunk_payload(model, psi0, cfg, lo, hi, record_set):
    wanted = tuple(j for j in range(lo, hi) if j in record_set)
    return (model, psi0, cfg, lo, hi, wanted)


def _run_chunk(payload):
    model, psi0, cfg, lo, hi, wanted = payload
    grid = cfg.grid
    indices = list(range(lo, hi))
    if cfg.integrator.adaptive:
        psis, finite, drift, inv_res = _chunk_per_trajectory(model, psi0, cfg, indices)
    else:
        res = run_batch(model, psi0, cfg.method, indices, cfg.master_seed, grid,
                        cfg.integrator, backend=cfg.backend,
                        rebase_interval=cfg.rebase_interval)
        psis, finite, drift, inv_res = res.psis, res.finite, res.norm_drift, res.inv_residual

    if cfg.method == "nonlinear":
        valid = finite & (drift <= NORM_DRIFT_LIMIT)
        norms = np.linalg.norm(psis, axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            psis = np.where(valid[:, None, None], psis / np.where(norms == 0, 1, norms)[:, :, None], psis)
    else:
        valid = finite

    good = psis[valid]                                  # (Nv, T, d)
    dyads = good[:, :, :, None] * good.conj()[:, :, None, :]
    s1 = dyads.sum(axis=0)
    s2re = np.sum(dyads.real ** 2, axis=0)
    s2im = np.sum(dyads.imag ** 2, axis=0)

    amps = good @ np.asarray(psi0, dtype=complex).conj()  # (Nv, T)
    a2 = np.abs(amps) ** 2
    surv = (a2.sum(axis=0), (a2 ** 2).sum(axis=0), (a2 ** 4).sum(axis=0))

    records = []
    valid_by_index = dict(zip(indices, valid))
    for j in wanted:
        if valid_by_index[j]:
            records.append(TrajectoryRecord(j, grid.copy(), psis[j - lo].copy()))
    failed = [indices[b] for b in range(len(indices)) if not valid[b]]
    diag = {
        "max_inv_residual": float(np.max(inv_res[valid], initial=0.0)),
        "max_norm_drift": float(np.max(drift[valid], initial=0.0)),
    }
    return (int(valid.sum()), s1, s2re, s2im, surv, records, failed, diag)


def _chunk_per_trajectory(model, psi0, cfg, indices):
    """Adaptive-integrator path: one trajectory at a time."""
    grid = cfg.grid
    d = model.dim
    nb = len(indices)
    psis = np.zeros((nb, grid.size, d), dtype=complex)
    finite = np.zeros(nb, dtype=bool)
    drift = np.zeros(nb)
    inv_res = np.zeros(nb)
    evolve = (evolve_trajectory_nonlinear if cfg.method == "nonlinear"
              else evolve_trajectory_linear)
    for b, j in enumerate(indices):
        gens = make_generators(model, cfg.master_seed, j)
        out = evolve(model, psi0, gens, grid, cfg.integrator)
        psis[b] = out.psis
        finite[b] = out.valid
        drift[b] = out.norm_drift
        inv_res[b] = out.inv_residual
    return psis, finite, drift, inv_res


def run_ensemble(model: SubsystemModel, psi0: np.ndarray, cfg: EnsembleConfig,
                 workers: int = 1) -> EnsembleResult:
    """Run cfg.n_traj independent trajectories and average their dyads.

    The density estimate is the plain mean of dyads (unnormalized states
    for the linear method, normalized for the nonlinear one) with standard
    errors from element-wise second moments.  Results are independent of
    the worker count.
    """
    t_start = time.perf_counter()
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (model.dim,):
        raise ValueError(f"psi0 has shape {psi0.shape}, expected ({model.dim},)")
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise ValueError("psi0 must be normalized")

    record_set = (set(range(cfg.n_traj)) if cfg.record_indices == "all"
                  else set(int(i) for i in cfg.record_indices))
    bounds = [(lo, min(lo + cfg.chunk_size, cfg.n_traj))
              for lo in range(0, cfg.n_traj, cfg.chunk_size)]
    payloads = [_chunk_payload(model, psi0, cfg, lo, hi, record_set)
                for lo, hi in bounds]

    if workers <= 1 or len(payloads) == 1:
        partials = [_run_chunk(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, p) for p in payloads]
            partials = [f.result() for f in futures]   # chunk order preserved

    T, d = cfg.grid.size, model.dim
    n_valid = 0
    s1 = np.zeros((T, d, d), dtype=complex)
    s2re = np.zeros((T, d, d))
    s2im = np.zeros((T, d, d))
    sv1 = np.zeros(T)
    sv2 = np.zeros(T)
    sv4 = np.zeros(T)
    records: list[TrajectoryRecord] = []
    failed: list[int] = []
    diag = {"max_inv_residual": 0.0, "max_norm_drift": 0.0}
    for nv, p1, p2re, p2im, surv, recs, fails, pdiag in partials:
        n_valid += nv
        s1 += p1
        s2re += p2re
        s2im += p2im
        sv1 += surv[0]
        sv2 += surv[1]
        sv4 += surv[2]
        records.extend(recs)
        failed.extend(fails)
        for key in diag:
            diag[key] = max(diag[key], pdiag[key])

    if n_valid == 0:
        raise EnsembleError("all trajectories failed")
    if len(failed) > cfg.max_failure_fraction * cfg.n_traj:
        raise EnsembleError(
            f"{len(failed)} of {cfg.n_traj} trajectories failed "
            f"(budget {cfg.max_failure_fraction:.1%}); first failures: {failed[:10]}")

    mean = s1 / n_valid
    if n_valid > 1:
        bessel = n_valid / (n_valid - 1.0)
        var_re = np.maximum(s2re / n_valid - mean.real ** 2, 0.0) * bessel
        var_im = np.maximum(s2im / n_valid - mean.imag ** 2, 0.0) * bessel
        se_re = np.sqrt(var_re / n_valid)
        se_im = np.sqrt(var_im / n_valid)
        m2 = sv1 / n_valid
        m4 = sv2 / n_valid
        se_m2 = np.sqrt(np.maximum(sv2 / n_valid - m2 ** 2, 0.0) * bessel / n_valid)
        se_m4 = np.sqrt(np.maximum(sv4 / n_valid - m4 ** 2, 0.0) * bessel / n_valid)
    else:
        se_re = np.zeros((T, d, d))
        se_im = np.zeros((T, d, d))
        m2, m4 = sv1, sv2
        se_m2 = np.zeros(T)
        se_m4 = np.zeros(T)

    density = DensityEstimate(cfg.grid.copy(), mean, se_re, se_im, n_valid)
    survival = SurvivalSeries(cfg.grid.copy(), m2, se_m2, m4, se_m4, n_valid)
    records.sort(key=lambda r: r.index)
    return EnsembleResult(density=density, survival=survival, records=records,
                          n_failed=len(failed), failed_indices=sorted(failed),
                          diagnostics=diag,
                          wall_time=time.perf_counter() - t_start,
                          backend=cfg.backend or default_backend())


def observable_series(est: DensityEstimate, op: np.ndarray):
    """Tr(O rho_t) with a propagated standard error.

    The error combines element-wise standard errors in quadrature and
    neglects cross-element covariances (exact for single-element
    observables such as projectors).
    Returns (times, values (complex), stderr).
    """
    op = np.asarray(op, dtype=complex)
    if op.shape != est.mean.shape[1:]:
        raise ValueError(f"operator shape {op.shape} does not match dim {est.dim}")
    vals = np.einsum("ij,tji->t", op, est.mean)
    w = np.abs(op.T) ** 2
    se = np.sqrt(np.einsum("ji,tji->t", w, est.se_re ** 2 + est.se_im ** 2))
    return est.times, vals, se


def survival_moments(records, psi0: np.ndarray) -> SurvivalSeries:
    """Survival moments recomputed from trajectory records.

    For a run with all trajectories recorded, the second moment equals
    <psi0| rho_hat |psi0> of the same run to roundoff (identical samples).
    """
    if not records:
        raise ValueError("no trajectory records given")
    a2 = np.array([np.abs(r.survival_amplitude(psi0)) ** 2 for r in records])
    n = a2.shape[0]
    m2 = a2.mean(axis=0)
    m4 = (a2 ** 2).mean(axis=0)
    if n > 1:
        se_m2 = a2.std(axis=0, ddof=1) / np.sqrt(n)
        se_m4 = (a2 ** 2).std(axis=0, ddof=1) / np.sqrt(n)
    else:
        se_m2 = np.zeros_like(m2)
        se_m4 = np.zeros_like(m4)
    return SurvivalSeries(records[0].times.copy(), m2, se_m2, m4, se_m4, n)


def dark_period_scan(record: TrajectoryRecord, manifold, threshold: float):
    """Maximal grid intervals where the manifold population sits below threshold."""
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must be in (0, 1)")
    pop = record.manifold_population(manifold)
    below = pop < threshold
    spans = []
    start = None
    for k, flag in enumerate(below):
        if flag and start is None:
            start = k
        elif not flag and start is not None:
            spans.append((float(record.times[start]), float(record.times[k - 1])))
            start = None
    if start is not None:
        spans.append((float(record.times[start]), float(record.times[-1])))
    return spans
