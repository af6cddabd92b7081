"""Linear propagator-pair trajectory equations.

The stochastic evolution operator U_t and its inverse are co-evolved so no
matrix is ever inverted; the memory integral of each kernel term is carried
as an auxiliary operator V (one per channel and term) obeying a local ODE:

    dU/dt    = -i H U + sum_c [ z_c L_c U - L_c^dag U (sum_j V_cj) ]
    dV_cj/dt = -(decay_cj + i freq_cj) V_cj + A_cj U^-1 L_c U
    dU^-1/dt = -U^-1 (dU/dt) U^-1

At t = 0: U = U^-1 = 1 and V = 0.  The trajectory state vector stores
[U, U^-1, V] flattened; unnormalized states psi_t = U_t psi0 contribute
dyads directly to the density average.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelPlan, SubsystemModel


@dataclass
class LinearTrajectoryState:
    """Structured view of one linear trajectory: U, U^-1, V stack, time."""

    prop: np.ndarray          # (d, d)
    prop_inv: np.ndarray      # (d, d)
    mem_ops: np.ndarray       # (n_channels, m_max, d, d)
    t: float = 0.0

    @classmethod
    def initial(cls, model: SubsystemModel) -> "LinearTrajectoryState":
        plan = ModelPlan(model)
        d = plan.dim
        return cls(np.eye(d, dtype=complex), np.eye(d, dtype=complex),
                   np.zeros((plan.n_channels, plan.m_max, d, d), dtype=complex), 0.0)


class LinearSystem:
    """Flat-vector adapter used by the time steppers.

    State layout: [U (d^2), U^-1 (d^2), V (C*M*d^2)] as complex128.
    """

    def __init__(self, model: SubsystemModel):
        self.plan = ModelPlan(model)
        d = self.plan.dim
        self._dd = d * d
        self.n_state = 2 * self._dd + self.plan.n_channels * self.plan.m_max * self._dd

    def initial(self) -> np.ndarray:
        d = self.plan.dim
        y = np.zeros(self.n_state, dtype=complex)
        y[:self._dd] = np.eye(d, dtype=complex).ravel()
        y[self._dd:2 * self._dd] = np.eye(d, dtype=complex).ravel()
        return y

    def views(self, y: np.ndarray):
        d = self.plan.dim
        u = y[:self._dd].reshape(d, d)
        ui = y[self._dd:2 * self._dd].reshape(d, d)
        v = y[2 * self._dd:2 * self._dd + self.plan.n_channels * self.plan.m_max * self._dd]
        return u, ui, v.reshape(self.plan.n_channels, self.plan.m_max, d, d)

    def rhs(self, t: float, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Time derivative; z holds one complex noise value per channel."""
        p = self.plan
        u, ui, v = self.views(y)
        dy = np.empty_like(y)
        du, dui, dv = self.views(dy)

        w = v.sum(axis=1)                     # per-channel sum of memory operators
        du[:] = -1j * (p.h @ u)
        for c in range(p.n_channels):
            lu = p.ops[c] @ u
            du += z[c] * lu
            du -= p.ops_dag[c] @ (u @ w[c])
            g = ui @ lu
            dv[c] = p.amp[c, :, None, None] * g - p.kdec[c, :, None, None] * v[c]
        dui[:] = -(ui @ du @ ui)
        return dy

    def refine_inverse(self, y: np.ndarray) -> None:
        """One Newton step U^-1 <- U^-1 (2 - U U^-1); numerical hygiene only."""
        u, ui, _ = self.views(y)
        d = self.plan.dim
        ui[:] = ui @ (2.0 * np.eye(d) - u @ ui)

    def prop_residual(self, y: np.ndarray) -> float:
        """max |U U^-1 - 1|, the inverse-pair consistency drift."""
        u, ui, _ = self.views(y)
        return float(np.max(np.abs(u @ ui - np.eye(self.plan.dim))))

    def psi(self, y: np.ndarray, psi0: np.ndarray) -> np.ndarray:
        u, _, _ = self.views(y)
        return u @ psi0


def linear_rhs(state: LinearTrajectoryState, z, model: SubsystemModel) -> LinearTrajectoryState:
    """Structured-state derivative (thin wrapper over LinearSystem.rhs)."""
    system = LinearSystem(model)
    y = np.concatenate([state.prop.ravel(), state.prop_inv.ravel(), state.mem_ops.ravel()])
    if y.size != system.n_state:
        raise ValueError("state dimensions do not match the model")
    dy = system.rhs(state.t, y, np.atleast_1d(np.asarray(z, dtype=complex)))
    du, dui, dv = system.views(dy)
    return LinearTrajectoryState(du.copy(), dui.copy(), dv.copy(), state.t)


@dataclass
class TrajectoryResult:
    """States of one trajectory on the output grid plus diagnostics."""

    times: np.ndarray
    psis: np.ndarray            # (n_times, dim)
    valid: bool
    reason: str = ""
    inv_residual: float = 0.0   # max over grid of |U U^-1 - 1|
    norm_drift: float = 0.0     # max over grid of | ||psi|| - 1 | (nonlinear)


def evolve_trajectory_linear(model: SubsystemModel, psi0: np.ndarray, gens,
                             grid, config) -> TrajectoryResult:
    """Integrate one linear trajectory; returns unnormalized psi_t = U_t psi0.

    gens: one burned-in NoiseGenerator per channel.  Dyads of the returned
    states average to the reduced density matrix without renormalization.
    """
    from .integrator import IntegrationFailure, integrate

    grid = np.asarray(grid, dtype=float)
    system = LinearSystem(model)
    psi0 = np.asarray(psi0, dtype=complex)
    try:
        states, aux = integrate(system, system.initial(), gens, grid, config)
    except IntegrationFailure as exc:
        return TrajectoryResult(grid, np.zeros((grid.size, model.dim), dtype=complex),
                                valid=False, reason=str(exc))
    psis = np.array([system.psi(s, psi0) for s in states])
    resid = max(system.prop_residual(s) for s in states)
    return TrajectoryResult(grid, psis, valid=True, inv_residual=resid)
