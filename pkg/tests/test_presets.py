import numpy as np
import pytest

from nmqsd.kernels import kernel_tau
from nmqsd.presets import (BANDGAP_PAIR_ROWS, ThreeLevelParams,
                           bandgap_fit_kernel, build_preset,
                           ion_surrogate_kernel, preset_run,
                           weighted_pair_state)


def test_dephasing_matrices():
    m = build_preset("dephasing")
    assert np.allclose(m.hamiltonian, np.diag([0.5, -0.5]))
    assert np.allclose(m.channels[0].op, np.sqrt(2) * np.diag([1, -1]))
    assert m.channels[0].kernel.alpha0 == pytest.approx(0.5)


def test_dissipative_spin_is_lowering():
    m = build_preset("dissipative_spin")
    assert np.allclose(m.channels[0].op, np.sqrt(2) * np.array([[0, 0], [1, 0]]))


def test_bandgap_atom_interaction_picture():
    m = build_preset("bandgap_atom")
    assert np.allclose(m.hamiltonian, 0)
    assert np.allclose(m.channels[0].op, np.array([[0, 0], [1j, 0]]))


def test_bandgap_kernel_alpha0_matches_pair_sum():
    kern = bandgap_fit_kernel()
    assert kern.n_terms == 24
    assert kern.alpha0 == pytest.approx(2 * sum(r[0] for r in BANDGAP_PAIR_ROWS))


def test_bandgap_gap_variant_shifts_frequencies():
    band = build_preset("bandgap_atom", {"variant": "band"}).channels[0].kernel
    gap = build_preset("bandgap_atom", {"variant": "gap"}).channels[0].kernel
    # detuning band_center - omega = 6 shifts every term frequency
    assert np.allclose(sorted(gap.freqs()), sorted(band.freqs() + 6.0))


def test_three_level_detector_operator():
    m = build_preset("three_level_ion")
    l4 = m.channels[3].op
    lam = 0.22 / np.sqrt(509.0)
    assert np.allclose(l4, lam * np.diag([1.0, 0.0, -1.0]), atol=1e-12)


def test_three_level_coupling_ratios():
    p = ThreeLevelParams()
    assert p.lam_13 == pytest.approx(np.sqrt(8 / 9) * p.rabi / (p.zeeman * np.sqrt(p.tau)))
    assert p.lam_31 == pytest.approx(np.sqrt(1 / 18) * p.rabi / (p.zeeman * np.sqrt(p.tau)))
    assert p.lam_13 / p.lam_31 == pytest.approx(4.0)


def test_ion_surrogate_kernel_constraints():
    kern = ion_surrogate_kernel()
    assert kernel_tau(kern) == pytest.approx(509.0, rel=1e-12)
    # principal decay within the first ~50 time units
    assert abs(kern(50.0)) < 0.45 * kern.alpha0
    assert abs(kern(5.0)) > 0.5 * kern.alpha0


def test_damped_oscillator_initial_levels():
    run_01 = preset_run("damped_oscillator", {"initial_levels": (0, 1)})
    run_12 = preset_run("damped_oscillator", {"initial_levels": (1, 2)})
    assert abs(run_01.psi0[0]) > 0 and run_01.psi0[2] == 0
    assert run_12.psi0[0] == 0 and abs(run_12.psi0[1]) > 0


def test_weighted_pair_state_density():
    psi = weighted_pair_state(2)
    rho = np.outer(psi, psi.conj())
    assert rho[0, 0].real == pytest.approx(5 / 7)
    assert rho[1, 1].real == pytest.approx(2 / 7)
    assert rho[0, 1] == pytest.approx((3 + 1j) / 7)


def test_unknown_preset_rejected():
    with pytest.raises(ValueError):
        build_preset("nonsense")
    with pytest.raises(ValueError):
        build_preset("dephasing", {"bogus_param": 1})


def test_hamiltonians_hermitian():
    for pid in ("dephasing", "dissipative_spin", "damped_oscillator",
                "double_well", "bandgap_atom", "three_level_ion"):
        m = build_preset(pid)
        h = m.hamiltonian
        assert np.max(np.abs(h - h.conj().T)) <= 1e-14
