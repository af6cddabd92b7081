"""Norm-preserving trajectory equations.

Compared with the linear system, the noise of each channel is shifted by a
running convolution y of the coupling expectation, operators enter centered
about their expectations, and a scalar compensation term keeps ||U psi0||
exactly constant along the flow:

    dU/dt    = -i H U
               + sum_c (z_c + sum_j y_cj) (L_c - <L_c>) U
               - sum_c (L_c^dag - <L_c^dag>) U W_c
               + comp * U
    comp     = sum_c <psi_t| (L_c^dag - <L_c^dag>) U W_c |psi0>
    dV_cj/dt = -(decay + i freq) V_cj + A_cj U^-1 L_c U
    dy_cj/dt = -(decay - i freq) y_cj + A_cj <L_c^dag>
    dU^-1/dt = -U^-1 (dU/dt) U^-1

with W_c = sum_j V_cj, psi_t = U psi0 and <X> = <psi|X|psi>/<psi|psi>.
W_c is evaluated once per derivative call and reused by every contraction,
and the compensation scalar is shared between the U and U^-1 derivatives.
Unit norm of psi_t is an invariant of the exact flow for any noise path,
which makes the norm a sharp integration-error diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelPlan, SubsystemModel


def expectation(psi: np.ndarray, op: np.ndarray) -> complex:
    """<psi|op|psi> / <psi|psi>; the normalization guards against drift."""
    n2 = np.vdot(psi, psi).real
    if n2 == 0:
        raise ValueError("expectation of the zero vector is undefined")
    return complex(np.vdot(psi, op @ psi) / n2)


@dataclass
class NonlinearTrajectoryState:
    """U, U^-1, V stack, noise-shift scalars y, cached psi = U psi0."""

    prop: np.ndarray
    prop_inv: np.ndarray
    mem_ops: np.ndarray        # (n_channels, m_max, d, d)
    shifts: np.ndarray         # (n_channels, m_max) complex
    psi: np.ndarray
    t: float = 0.0

    @classmethod
    def initial(cls, model: SubsystemModel, psi0: np.ndarray) -> "NonlinearTrajectoryState":
        plan = ModelPlan(model)
        d = plan.dim
        return cls(np.eye(d, dtype=complex), np.eye(d, dtype=complex),
                   np.zeros((plan.n_channels, plan.m_max, d, d), dtype=complex),
                   np.zeros((plan.n_channels, plan.m_max), dtype=complex),
                   np.asarray(psi0, dtype=complex).copy(), 0.0)


class NonlinearSystem:
    """Flat-vector adapter: [U, U^-1, V, y] as complex128."""

    def __init__(self, model: SubsystemModel, psi0: np.ndarray):
        self.plan = ModelPlan(model)
        d = self.plan.dim
        self.psi0 = np.asarray(psi0, dtype=complex).copy()
        if self.psi0.shape != (d,):
            raise ValueError(f"psi0 has shape {self.psi0.shape}, expected ({d},)")
        if abs(np.linalg.norm(self.psi0) - 1.0) > 1e-10:
            raise ValueError("psi0 must be normalized for the norm-preserving method")
        self._dd = d * d
        self._nv = self.plan.n_channels * self.plan.m_max
        self.n_state = 2 * self._dd + self._nv * self._dd + self._nv

    def initial(self) -> np.ndarray:
        d = self.plan.dim
        y = np.zeros(self.n_state, dtype=complex)
        y[:self._dd] = np.eye(d, dtype=complex).ravel()
        y[self._dd:2 * self._dd] = np.eye(d, dtype=complex).ravel()
        return y

    def views(self, y: np.ndarray):
        d, c, m = self.plan.dim, self.plan.n_channels, self.plan.m_max
        u = y[:self._dd].reshape(d, d)
        ui = y[self._dd:2 * self._dd].reshape(d, d)
        base = 2 * self._dd
        v = y[base:base + self._nv * self._dd].reshape(c, m, d, d)
        sh = y[base + self._nv * self._dd:].reshape(c, m)
        return u, ui, v, sh

    def rhs(self, t: float, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        p = self.plan
        u, ui, v, sh = self.views(y)
        dy = np.empty_like(y)
        du, dui, dv, dsh = self.views(dy)

        psi = u @ self.psi0
        n2 = np.vdot(psi, psi).real
        w = v.sum(axis=1)
        du[:] = -1j * (p.h @ u)
        comp = 0.0 + 0.0j
        for c in range(p.n_channels):
            lu = p.ops[c] @ u
            lpsi = p.ops[c] @ psi
            ell = np.vdot(psi, lpsi) / n2
            uw = u @ w[c]
            wpsi = uw @ self.psi0
            shift = z[c] + sh[c].sum()
            du += shift * (lu - ell * u)
            du -= p.ops_dag[c] @ uw - np.conj(ell) * uw
            comp += np.vdot(lpsi, wpsi) - np.conj(ell) * np.vdot(psi, wpsi)
            g = ui @ lu
            dv[c] = p.amp[c, :, None, None] * g - p.kdec[c, :, None, None] * v[c]
            dsh[c] = p.amp[c] * np.conj(ell) - np.conj(p.kdec[c]) * sh[c]
        du += comp * u
        dui[:] = -(ui @ du @ ui)
        return dy

    def refine_inverse(self, y: np.ndarray) -> None:
        u, ui, _, _ = self.views(y)
        d = self.plan.dim
        ui[:] = ui @ (2.0 * np.eye(d) - u @ ui)

    def prop_residual(self, y: np.ndarray) -> float:
        u, ui, _, _ = self.views(y)
        return float(np.max(np.abs(u @ ui - np.eye(self.plan.dim))))

    def psi(self, y: np.ndarray, psi0: np.ndarray | None = None) -> np.ndarray:
        u, _, _, _ = self.views(y)
        return u @ (self.psi0 if psi0 is None else psi0)


def nonlinear_rhs(state: NonlinearTrajectoryState, z, model: SubsystemModel,
                  psi0: np.ndarray) -> NonlinearTrajectoryState:
    """Structured-state derivative (thin wrapper over NonlinearSystem.rhs)."""
    system = NonlinearSystem(model, psi0)
    y = np.concatenate([state.prop.ravel(), state.prop_inv.ravel(),
                        state.mem_ops.ravel(), state.shifts.ravel()])
    if y.size != system.n_state:
        raise ValueError("state dimensions do not match the model")
    dy = system.rhs(state.t, y, np.atleast_1d(np.asarray(z, dtype=complex)))
    du, dui, dv, dsh = system.views(dy)
    dpsi = du @ np.asarray(psi0, dtype=complex)
    return NonlinearTrajectoryState(du.copy(), dui.copy(), dv.copy(), dsh.copy(),
                                    dpsi, state.t)


#: trajectories whose norm drifts beyond this are excluded, not renormalized
NORM_DRIFT_LIMIT = 1e-6


def evolve_trajectory_nonlinear(model: SubsystemModel, psi0: np.ndarray, gens,
                                grid, config) -> "TrajectoryResult":
    """Integrate one norm-preserving trajectory.

    Emitted states are renormalized to unit norm at the output points
    (correcting integrator drift, expected at the 1e-8 level).  If the raw
    drift exceeds NORM_DRIFT_LIMIT the trajectory is flagged invalid and
    excluded instead of being silently renormalized.
    """
    from .dynamics_linear import TrajectoryResult
    from .integrator import IntegrationFailure, integrate

    grid = np.asarray(grid, dtype=float)
    system = NonlinearSystem(model, psi0)
    try:
        states, aux = integrate(system, system.initial(), gens, grid, config)
    except IntegrationFailure as exc:
        return TrajectoryResult(grid, np.zeros((grid.size, model.dim), dtype=complex),
                                valid=False, reason=str(exc))
    psis = np.array([system.psi(s) for s in states])
    norms = np.linalg.norm(psis, axis=1)
    drift = float(np.max(np.abs(norms - 1.0)))
    resid = max(system.prop_residual(s) for s in states)
    if drift > NORM_DRIFT_LIMIT:
        return TrajectoryResult(grid, psis, valid=False,
                                reason=f"norm drift {drift:.2e} exceeds {NORM_DRIFT_LIMIT:.0e}",
                                inv_residual=resid, norm_drift=drift)
    psis /= norms[:, None]
    return TrajectoryResult(grid, psis, valid=True, inv_residual=resid, norm_drift=drift)
