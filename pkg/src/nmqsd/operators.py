"""Dense complex operators for small subsystems.

Everything here is plain ``numpy.ndarray`` with ``dtype=complex128``.
Matrices are small (dim of order 2..10), so no sparsity or cleverness is
attempted.  All constructors return freshly allocated arrays; callers may
treat them as immutable and share them freely across trajectory workers.
"""

from __future__ import annotations

import numpy as np

HERMITICITY_TOL = 1e-14


def sigma_x() -> np.ndarray:
    return np.array([[0, 1], [1, 0]], dtype=complex)


def sigma_y() -> np.ndarray:
    return np.array([[0, -1j], [1j, 0]], dtype=complex)


def sigma_z() -> np.ndarray:
    """Pauli z with convention sigma_z|i> = (-1)^(i-1)|i>, i = 1, 2.

    Basis index 0 is the state labeled |1> (eigenvalue +1), index 1 is |2>.
    """
    return np.array([[1, 0], [0, -1]], dtype=complex)


def identity(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex)


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def is_hermitian(a: np.ndarray, tol: float = HERMITICITY_TOL) -> bool:
    return bool(np.max(np.abs(a - a.conj().T)) <= tol)


def ladder_operators(n_basis: int) -> tuple[np.ndarray, np.ndarray]:
    """Truncated boson lowering/raising operators on n_basis number states.

    a|n> = sqrt(n)|n-1>, a_dag = a^dagger.  The truncation means
    a_dag|n_basis-1> = 0, so identities like [a, a_dag] = 1 hold only on
    the lower levels (the bottom-right commutator entry is 1 - n_basis).
    """
    if n_basis < 2:
        raise ValueError(f"n_basis must be >= 2, got {n_basis}")
    a = np.zeros((n_basis, n_basis), dtype=complex)
    for n in range(1, n_basis):
        a[n - 1, n] = np.sqrt(n)
    return a, a.conj().T


def number_operator(n_basis: int) -> np.ndarray:
    a, a_dag = ladder_operators(n_basis)
    return a_dag @ a


def basis_state(dim: int, index: int) -> np.ndarray:
    psi = np.zeros(dim, dtype=complex)
    psi[index] = 1.0
    return psi


def normalized(psi: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(psi)
    if nrm == 0:
        raise ValueError("cannot normalize the zero vector")
    return np.asarray(psi, dtype=complex) / nrm


def double_well_hamiltonian(omega: float, epsilon: float, n_basis: int) -> np.ndarray:
    """Quartic double-well Hamiltonian in a truncated number basis.

    H = omega * [a_dag a - (3/8)(a_dag + a)^2 + epsilon (a_dag + a)^4]

    The powers of (a + a_dag) are formed by multiplying the truncated
    matrix, so the top basis levels carry truncation error; results are
    meaningful for states supported on the lower levels.  epsilon is the
    dimensionless quartic coefficient (inverse barrier height); smaller
    epsilon means a higher barrier.
    """
    if omega <= 0:
        raise ValueError(f"omega must be positive, got {omega}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    a, a_dag = ladder_operators(n_basis)
    x = a + a_dag
    x2 = x @ x
    h = omega * (a_dag @ a - 0.375 * x2 + epsilon * (x2 @ x2))
    # x2@x2 equals (x@x)@(x@x); symmetrize away rounding noise
    return 0.5 * (h + h.conj().T)


def hermite_functions(n_max: int, x: np.ndarray) -> np.ndarray:
    """Harmonic-oscillator eigenfunctions phi_0..phi_n_max on a grid.

    Returns shape (n_max + 1, len(x)).  Uses the stable normalized
    recurrence phi_{n+1} = sqrt(2/(n+1)) x phi_n - sqrt(n/(n+1)) phi_{n-1}
    with phi_0 = pi^(-1/4) exp(-x^2/2).  x is in units of the oscillator
    length sqrt(hbar / m omega).
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros((n_max + 1, x.size), dtype=float)
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, n_max):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1.0)) * out[n - 1]
    return out


def position_density(rho: np.ndarray, x_grid: np.ndarray, n_basis: int | None = None) -> np.ndarray:
    """Diagonal position-space density <x|rho|x> in the number basis.

    rho is a density matrix in the truncated oscillator basis; x_grid is in
    oscillator-length units.  Returns a real array over x_grid.
    """
    rho = np.asarray(rho, dtype=complex)
    if n_basis is None:
        n_basis = rho.shape[0]
    if rho.shape != (n_basis, n_basis):
        raise ValueError(f"rho has shape {rho.shape}, expected ({n_basis}, {n_basis})")
    phi = hermite_functions(n_basis - 1, np.asarray(x_grid, dtype=float))
    # <x|rho|x> = sum_mn phi_m(x) rho_mn phi_n(x); phi are real
    return np.real(np.einsum("mx,mn,nx->x", phi, rho, phi))
