import numpy as np
import pytest

from nmqsd.operators import (dagger, double_well_hamiltonian, hermite_functions,
                             is_hermitian, ladder_operators, position_density)
from nmqsd.oracles import dense_diagonalize


def test_ladder_action_two_levels():
    a, a_dag = ladder_operators(2)
    e0 = np.array([1, 0], dtype=complex)
    e1 = np.array([0, 1], dtype=complex)
    assert np.allclose(a @ e1, e0)
    assert np.allclose(a @ e0, 0)


def test_number_operator_diagonal():
    a, a_dag = ladder_operators(5)
    assert np.allclose(a_dag @ a, np.diag([0, 1, 2, 3, 4]))


def test_truncated_commutator():
    # direct matrix multiplication: identity except the top level, where the
    # missing |5> state leaves [a, a_dag] = -4 on the bottom-right entry
    a, a_dag = ladder_operators(5)
    comm = a @ a_dag - a_dag @ a
    assert np.allclose(comm, np.diag([1, 1, 1, 1, -4]))


def test_ladder_rejects_small_basis():
    with pytest.raises(ValueError):
        ladder_operators(1)


def test_dagger_involution_and_product_rule():
    rng = np.random.default_rng(7)
    for _ in range(20):
        d = rng.integers(2, 6)
        x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        y = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        assert np.array_equal(dagger(dagger(x)), x)
        assert np.allclose(dagger(x @ y), dagger(y) @ dagger(x), atol=1e-13)


def test_double_well_hermitian_and_parity():
    for eps in (0.1, 0.692, 3.0):
        h = double_well_hamiltonian(1.0, eps, 5)
        assert np.max(np.abs(h - h.conj().T)) <= 1e-14
        parity = np.diag([(-1.0) ** n for n in range(5)])
        assert np.allclose(parity @ h @ parity, h)


def test_double_well_quartic_dominates_at_large_epsilon():
    e_low = [dense_diagonalize(double_well_hamiltonian(1.0, eps, 5))[0][0]
             for eps in (1.0, 10.0, 100.0)]
    assert e_low[0] < e_low[1] < e_low[2]


def test_double_well_splitting_grows_with_epsilon():
    # dense-diagonalization oracle values (five-state basis, omega = 1):
    # higher barriers (smaller epsilon) give a more nearly degenerate doublet
    splittings = {}
    for eps in (0.005, 0.1, 0.692):
        w, v = dense_diagonalize(double_well_hamiltonian(1.0, eps, 5))
        splittings[eps] = w[1] - w[0]
    assert splittings[0.005] < splittings[0.1] < splittings[0.692]
    assert np.isclose(splittings[0.692], 2.4548298242981033, atol=1e-10)
    assert np.isclose(splittings[0.1], 1.029485856476536, atol=1e-10)
    # "much smaller than omega" holds in the deep-barrier regime
    assert splittings[0.005] < 0.2


def test_hermite_recurrence_matches_polynomials():
    # phi_n = H_n(x) exp(-x^2/2) / sqrt(2^n n! sqrt(pi)) for n <= 4
    polys = [
        lambda x: np.ones_like(x),
        lambda x: 2 * x,
        lambda x: 4 * x ** 2 - 2,
        lambda x: 8 * x ** 3 - 12 * x,
        lambda x: 16 * x ** 4 - 48 * x ** 2 + 12,
    ]
    x = np.array([0.0, 1.0, -1.0])
    phi = hermite_functions(4, x)
    import math
    for n in range(5):
        direct = polys[n](x) * np.exp(-0.5 * x ** 2) / np.sqrt(
            2.0 ** n * math.factorial(n) * np.sqrt(np.pi))
        assert np.max(np.abs(phi[n] - direct)) <= 1e-12


def test_position_density_ground_state():
    rho = np.zeros((5, 5), dtype=complex)
    rho[0, 0] = 1.0
    x = np.linspace(-4, 4, 201)
    dens = position_density(rho, x)
    assert np.allclose(dens, np.exp(-x ** 2) / np.sqrt(np.pi), atol=1e-12)


def test_position_density_normalization():
    rng = np.random.default_rng(3)
    psi = rng.normal(size=5) + 1j * rng.normal(size=5)
    psi /= np.linalg.norm(psi)
    rho = np.outer(psi, psi.conj())
    x = np.linspace(-10, 10, 2001)
    dens = position_density(rho, x)
    assert abs(np.trapezoid(dens, x) - 1.0) < 1e-8


def test_position_density_mean_position():
    # psi = (|0> - |1>)/sqrt(2): <x> = -1/sqrt(2) from x = (a + a_dag)/sqrt(2)
    psi = np.zeros(5, dtype=complex)
    psi[0], psi[1] = 1 / np.sqrt(2), -1 / np.sqrt(2)
    rho = np.outer(psi, psi.conj())
    x = np.linspace(-10, 10, 4001)
    dens = position_density(rho, x)
    mean_x = np.trapezoid(x * dens, x)
    assert abs(mean_x - (-1 / np.sqrt(2))) < 1e-6


def test_is_hermitian():
    assert is_hermitian(np.array([[1.0, 1j], [-1j, 2.0]]))
    assert not is_hermitian(np.array([[0.0, 1.0], [0.0, 0.0]]))
