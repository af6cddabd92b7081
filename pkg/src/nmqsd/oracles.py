"""Deterministic reference solutions for validating the stochastic engine.

Each sum-of-exponentials kernel term A exp(-(decay + i freq) dt) is exactly
the zero-temperature correlation of one damped bosonic mode with frequency
freq, coupling sqrt(A) and energy decay rate 2*decay.  Enlarging the system
with one such mode per kernel term and integrating the Lindblad master
equation of the enlarged system therefore gives the exact reduced dynamics,
to be compared against trajectory averages.  Convergence is certified by
incrementing every mode's Fock cutoff and requiring the reduced density to
move less than a tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .model import SubsystemModel
from .operators import ladder_operators

MAX_ENLARGED_DIM = 20_000


class CutoffConvergenceError(RuntimeError):
    pass


@dataclass
class PseudomodeConfig:
    fock_cutoff: int = 6
    rtol: float = 1e-10
    atol: float = 1e-12
    conv_tol: float = 1e-6
    max_rounds: int = 6
    check_convergence: bool = True

    def __post_init__(self):
        if self.fock_cutoff < 2:
            raise ValueError("fock_cutoff must be >= 2")


def _lift(op: np.ndarray, slot: int, dims: list[int]) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for k, dk in enumerate(dims):
        out = np.kron(out, op if k == slot else np.eye(dk, dtype=complex))
    return out


def _lindblad_rhs_factory(h_tot: np.ndarray, collapse: list[np.ndarray]):
    dim = h_tot.shape[0]
    pairs = [(c, c.conj().T) for c in collapse]
    anti = sum(cd @ c for c, cd in pairs) if pairs else np.zeros_like(h_tot)

    def rhs(t, y):
        rho = y.reshape(dim, dim)
        drho = -1j * (h_tot @ rho - rho @ h_tot)
        drho -= 0.5 * (anti @ rho + rho @ anti)
        for c, cd in pairs:
            drho += c @ rho @ cd
        return drho.ravel()

    return rhs


def _integrate_master(h_tot, collapse, rho0, grid, rtol, atol):
    rhs = _lindblad_rhs_factory(h_tot, collapse)
    # complex state is supported directly by solve_ivp
    sol = solve_ivp(rhs, (grid[0], grid[-1]), rho0.ravel(), t_eval=grid,
                    method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"master-equation integration failed: {sol.message}")
    dim = rho0.shape[0]
    return sol.y.T.reshape(len(grid), dim, dim)


def _pseudomode_once(model: SubsystemModel, psi0: np.ndarray, grid: np.ndarray,
                     cutoff: int, cfg: PseudomodeConfig) -> np.ndarray:
    d = model.dim
    mode_terms = []   # (channel index, amplitude, decay, freq)
    for c, ch in enumerate(model.channels):
        for term in ch.kernel.terms:
            mode_terms.append((c, term.amplitude, term.decay, term.freq))
    dims = [d] + [cutoff] * len(mode_terms)
    total = int(np.prod(dims))
    if total > MAX_ENLARGED_DIM:
        raise ValueError(f"enlarged dimension {total} exceeds {MAX_ENLARGED_DIM}; "
                         "too many kernel terms for the pseudomode oracle")

    a, a_dag = ladder_operators(cutoff)
    h_tot = _lift(model.hamiltonian, 0, dims)
    collapse = []
    for slot, (c, amp, dec, freq) in enumerate(mode_terms, start=1):
        b = _lift(a, slot, dims)
        b_dag = _lift(a_dag, slot, dims)
        l_op = _lift(model.channels[c].op, 0, dims)
        h_tot = h_tot + freq * (b_dag @ b) + np.sqrt(amp) * (l_op @ b_dag + l_op.conj().T @ b)
        collapse.append(np.sqrt(2.0 * dec) * b)

    vac = np.zeros(total // d, dtype=complex)
    vac[0] = 1.0
    psi_tot = np.kron(np.asarray(psi0, dtype=complex), vac)
    rho0 = np.outer(psi_tot, psi_tot.conj())
    rho_tot = _integrate_master(h_tot, collapse, rho0, grid, cfg.rtol, cfg.atol)
    env = total // d
    return np.einsum("timjm->tij", rho_tot.reshape(len(grid), d, env, d, env))


def pseudomode_reference(model: SubsystemModel, psi0: np.ndarray, grid,
                         cfg: PseudomodeConfig | None = None) -> np.ndarray:
    """Exact reduced density on the grid via the enlarged-system master equation.

    Refines the per-mode Fock cutoff until the result moves less than
    cfg.conv_tol under cutoff + 1 (raises CutoffConvergenceError if the
    budget runs out first).  Returns shape (len(grid), d, d).
    """
    cfg = cfg or PseudomodeConfig()
    grid = np.asarray(grid, dtype=float)
    cutoff = cfg.fock_cutoff
    rho = _pseudomode_once(model, psi0, grid, cutoff, cfg)
    if not cfg.check_convergence:
        return rho
    delta = np.inf
    for _ in range(cfg.max_rounds):
        finer = _pseudomode_once(model, psi0, grid, cutoff + 1, cfg)
        delta = float(np.max(np.abs(finer - rho)))
        if delta < cfg.conv_tol:
            return finer
        cutoff += 1
        rho = finer
    raise CutoffConvergenceError(
        f"pseudomode oracle not converged at cutoff {cutoff} (delta {delta:.2e})")


def markovian_reference(model: SubsystemModel, rates, psi0: np.ndarray, grid,
                        rtol: float = 1e-10, atol: float = 1e-12) -> np.ndarray:
    """Standard dissipator-form master equation with given channel rates.

    d rho/dt = -i[H, rho] + sum_i rate_i (L_i rho L_i^dag - {L_i^dag L_i, rho}/2)
    """
    grid = np.asarray(grid, dtype=float)
    rates = list(rates)
    if len(rates) != model.n_channels:
        raise ValueError(f"got {len(rates)} rates for {model.n_channels} channels")
    if any(r < 0 for r in rates):
        raise ValueError("rates must be non-negative")
    collapse = [np.sqrt(r) * ch.op for r, ch in zip(rates, model.channels) if r > 0]
    psi0 = np.asarray(psi0, dtype=complex)
    rho0 = np.outer(psi0, psi0.conj())
    return _integrate_master(model.hamiltonian, collapse, rho0, grid, rtol, atol)


def dense_diagonalize(h: np.ndarray, tol: float = 1e-10):
    """Eigenvalues (ascending) and eigenvectors of a Hermitian matrix."""
    h = np.asarray(h, dtype=complex)
    if np.max(np.abs(h - h.conj().T)) > tol:
        raise ValueError("matrix is not Hermitian")
    w, v = np.linalg.eigh(h)
    return w, v
