import warnings

import numpy as np
import pytest

from decoctl.baths import ExponentialDephasingBath
from decoctl.dephasing import (
    DephasingEngine,
    DephasingScenario,
    basis_state_fidelity,
    bell_fidelity,
    bell_fidelity_series,
    bell_rotation,
    binary_distance,
    compute_dephasing,
    compute_JP,
    flip_target,
    second_order_density,
)
from decoctl.modulation import DrivingEnvelope, ChannelModulation, ModulationSchedule

PI = np.pi


def free_scenario(M=2, gamma=0.01, t_end=5.0, cross=True):
    bath = ExponentialDephasingBath(gamma, [1.0] * M, cross_correlated=cross)
    return DephasingScenario(bath, ModulationSchedule.unmodulated((1,) * M), t_end)


def fig6(theta2_over_pi, cross=True):
    bath = ExponentialDephasingBath(0.01, [1.0, 1.0], cross_correlated=cross)
    return DephasingScenario(bath, ModulationSchedule.pulse_trains(1.0, [0.9 * PI, theta2_over_pi * PI]), 25.0)


def test_binary_distance_examples():
    assert binary_distance(0b101 + 1, 0b100 + 1, 3) == 1
    assert flip_target(0b101 + 1, 0b100 + 1, 3)[0] == 3
    assert binary_distance(4, 4, 3) == 0
    assert binary_distance(1, 0b011 + 1, 3) == 2
    with pytest.raises(ValueError):
        flip_target(1, 0b011 + 1, 3)


def test_flip_sign_conventions():
    # 100 -> 000 flips qubit 1 from 1 to 0: +1 under the prose reading
    assert flip_target(1, 0b100 + 1, 3) == (1, 1)
    assert flip_target(1, 0b100 + 1, 3, convention="formula") == (1, -1)


def test_JP_closed_form_unmodulated():
    r = compute_dephasing(free_scenario(t_end=6.0))
    for t in (1.0, 2.0, 6.0):
        want = 0.01 * (t - (1 - np.exp(-t)))
        assert compute_JP(r, 1, 1, t).real == pytest.approx(want, rel=1e-7)


def test_basis_fidelity_closed_form_value():
    F = basis_state_fidelity(free_scenario(), 2.0)
    assert F == pytest.approx(1 - 0.01 * (2 - (1 - np.exp(-2))), abs=1e-9)
    assert F == pytest.approx(0.98865, abs=5e-6)


def test_zero_bath():
    r = compute_dephasing(free_scenario(gamma=0.0))
    assert np.all(r.I == 0)
    assert basis_state_fidelity(r, 5.0) == 1.0
    rho = np.diag([0.1, 0.2, 0.3, 0.4]).astype(complex)
    rho[0, 3] = rho[3, 0] = 0.05
    assert np.array_equal(second_order_density(r, rho, 5.0), rho)


def test_fidelity_one_at_zero():
    r = compute_dephasing(fig6(0.8))
    assert basis_state_fidelity(r, 0.0) == 1.0
    for l in range(1, 5):
        for frame in ("lab", "drive"):
            assert bell_fidelity(r, l, 0.0, frame) == pytest.approx(1.0, abs=1e-12)


def test_global_bell_cross_kernel_is_diagonal_form():
    # phi_1 = phi_2: the l = 4 cross kernel is the conjugate of the basis kernel,
    # so it is the diagonal integral rescaled by Phi_12 / Phi_11
    sc = fig6(0.9)
    r = compute_dephasing(sc)
    ratio = sc.bath.response(0.0)[0, 1].real / sc.bath.response(0.0)[0, 0].real
    j4 = compute_JP(r, 1, 2, 25.0, bell_index=4)
    assert j4 == pytest.approx(np.conj(compute_JP(r, 1, 2, 25.0)), abs=1e-15)
    assert j4 == pytest.approx(ratio * np.conj(compute_JP(r, 1, 1, 25.0)), abs=1e-13)


def test_maximally_mixed_unchanged():
    r = compute_dephasing(fig6(0.8))
    rho = np.eye(4, dtype=complex) / 4
    assert np.allclose(second_order_density(r, rho, 25.0), rho, atol=1e-15)


@pytest.mark.parametrize("M", [1, 2, 3])
def test_density_trace_and_hermiticity(M):
    bath = ExponentialDephasingBath(0.01, [1.0] * M)
    sc = DephasingScenario(bath, ModulationSchedule.pulse_trains(1.0, np.linspace(0.5, 1.0, M) * PI), 5.0)
    r = compute_dephasing(sc)
    rng = np.random.default_rng(4)
    psi = rng.normal(size=2**M) + 1j * rng.normal(size=2**M)
    psi /= np.linalg.norm(psi)
    rho = second_order_density(r, np.outer(psi, psi.conj()), 5.0)
    assert abs(np.trace(rho) - 1) < 1e-8
    assert np.abs(rho - rho.conj().T).max() < 1e-8


def test_single_qubit_population_relaxes():
    r = compute_dephasing(free_scenario(M=1, t_end=5.0))
    rho = second_order_density(r, np.diag([1.0, 0.0]).astype(complex), 5.0)
    assert rho[0, 0].real == pytest.approx(1 - 0.5 * compute_JP(r, 1, 1, 5.0).real, abs=1e-12)
    assert 0.5 < rho[0, 0].real < 1


@pytest.mark.parametrize("M", [2, 3, 4])
def test_basis_fidelity_matches_density_for_every_basis_state(M):
    bath = ExponentialDephasingBath(0.01, [1.0] * M)
    sc = DephasingScenario(bath, ModulationSchedule.pulse_trains(1.0, np.linspace(0.5, 1.0, M) * PI), 5.0)
    r = compute_dephasing(sc)
    F = basis_state_fidelity(r, 5.0)
    for l in range(2**M):
        rho = np.zeros((2**M, 2**M), complex)
        rho[l, l] = 1
        assert abs(second_order_density(r, rho, 5.0)[l, l].real - F) < 1e-10


def test_bell_rotation_unitary():
    U = bell_rotation()
    assert np.allclose(U @ U.conj().T, np.eye(4), atol=1e-14)
    assert np.allclose(np.linalg.norm(U, axis=1), 1.0, atol=1e-14)
    sym = np.array([1, 0, 0, 1]) / np.sqrt(2)
    assert abs(np.vdot(sym, U[1])) < 1e-14


@pytest.mark.parametrize("theta2", [0.9, 0.8])
def test_recipe_matches_density_in_drive_frame(theta2):
    r = compute_dephasing(fig6(theta2))
    for l in range(1, 5):
        for t in (1.5, 7.0, 25.0):
            assert bell_fidelity(r, l, t, "drive") == pytest.approx(bell_fidelity(r, l, t, "drive", "density"), abs=1e-12)


def test_recipe_matches_density_in_lab_frame_global():
    r = compute_dephasing(fig6(0.9))
    for l in range(1, 5):
        assert bell_fidelity(r, l, 7.0, "lab") == pytest.approx(bell_fidelity(r, l, 7.0, "lab", "density"), abs=1e-12)


def test_global_singlet_above_triplet():
    r = compute_dephasing(fig6(0.9))
    s, tr = bell_fidelity_series(r, 2), bell_fidelity_series(r, 4)
    assert np.all(s >= tr - 1e-15)
    assert (s - tr).max() > 0.005


def test_local_equalizes_bell_states():
    r = compute_dephasing(fig6(0.8))
    assert np.abs(bell_fidelity_series(r, 2) - bell_fidelity_series(r, 4)).max() < 0.01


def test_decorrelation_equivalence():
    a, b = compute_dephasing(fig6(0.8)), compute_dephasing(fig6(0.8, cross=False))
    for l in (2, 4):
        assert np.abs(bell_fidelity_series(a, l) - bell_fidelity_series(b, l)).max() < 0.02


def test_thetas_override_matches_fresh_scenario():
    eng = DephasingEngine(fig6(0.9))
    a = eng.run(PI * np.array([0.9, 0.8]))
    b = compute_dephasing(fig6(0.8))
    assert np.allclose(a.I, b.I, atol=1e-14)
    assert np.allclose(a.phi, b.phi)


def test_backends_agree():
    sc = fig6(0.8)
    a = DephasingEngine(sc, backend="numba").run()
    b = DephasingEngine(sc, backend="numpy").run()
    assert np.allclose(a.I, b.I, atol=1e-14)


def test_constant_drive_phase_enters_lab_frame():
    bath = ExponentialDephasingBath(0.01, [1.0, 1.0])
    mod = ModulationSchedule([ChannelModulation(drive=DrivingEnvelope.constant(0.1)), ChannelModulation()])
    r = compute_dephasing(DephasingScenario(bath, mod, 5.0))
    assert np.allclose(r.phi[:, 0], 0.2 * r.t)
    assert np.all(r.phi[:, 1] == 0)


def test_warns_outside_second_order_regime():
    r = compute_dephasing(free_scenario(gamma=0.5, t_end=5.0))
    with pytest.warns(RuntimeWarning):
        basis_state_fidelity(r, 5.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        basis_state_fidelity(compute_dephasing(free_scenario()), 5.0)
