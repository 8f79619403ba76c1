import numpy as np
import pytest
from scipy import integrate
from scipy.special import erf

from decoctl.baths import CorrelatedGaussianDecayBath, GaussianDipoleBath
from decoctl.decay import (
    DecayEngine,
    DecayScenario,
    amplitudes_from_mixing,
    compute_J,
    compute_W,
    conditions_satisfied,
    dicke_vector,
    entangled_basis_fidelity,
    evolve_amplitudes,
    mixing_decay_parameters,
    preservation_fidelity,
    preservation_residuals,
    steering_residual,
)
from decoctl.errors import NumericalRefusal
from decoctl.modulation import ModulationSchedule

PI = np.pi


def scalar_gaussian(t_end=10.0, tc=1.0, strength=1.0, memory="full", dt=None):
    bath = GaussianDipoleBath(np.array([[strength]]), np.zeros(1), tc)
    return DecayScenario(bath, ModulationSchedule.unmodulated((1,)), [0.0], [1.0], t_end, dt=dt, memory=memory)


def J_closed(t, tc=1.0):
    return np.sqrt(PI) * tc * (t * erf(t / (2 * tc)) + 2 * tc / np.sqrt(PI) * (np.exp(-t**2 / (4 * tc**2)) - 1))


def test_W_scalar_gaussian_at_two_tc():
    w = compute_W(scalar_gaussian(4.0), 2.0)
    assert w[0, 0] == pytest.approx(np.sqrt(PI) * erf(1.0), rel=1e-8)
    assert w[0, 0] == pytest.approx(1.4936, abs=1e-4)


def test_W_matches_quadrature():
    sc = scalar_gaussian(6.0)
    for t in (0.5, 3.0, 6.0):
        ref = integrate.quad(lambda s: np.exp(-s**2 / 4), 0, t, epsabs=1e-13)[0]
        assert compute_W(sc, t)[0, 0] == pytest.approx(ref, rel=1e-8)


def test_J_scalar_closed_form_and_large_t():
    h = evolve_amplitudes(scalar_gaussian(20.0))
    i = h.index(20.0)
    assert h.J[i, 0, 0].real == pytest.approx(J_closed(20.0), rel=1e-8)
    assert J_closed(20.0) == pytest.approx(np.sqrt(PI) * 20.0 - 2.0, rel=1e-12)


def test_scalar_amplitude_is_exp_minus_J():
    h = evolve_amplitudes(scalar_gaussian(5.0))
    assert np.allclose(np.abs(h.alpha_tilde[:, 0]), np.exp(-J_closed(h.t)), rtol=1e-7)


def test_scalar_preservation_fidelity():
    h = evolve_amplitudes(scalar_gaussian(20.0, strength=0.01))
    f = preservation_fidelity(h, 20.0)
    assert f.value == pytest.approx(np.exp(-2 * 0.01 * J_closed(20.0)), rel=1e-8)
    assert not f.approximate


def test_zero_bath_everything_trivial():
    bath = CorrelatedGaussianDecayBath(0.0, [1.0, 1.0])
    a0 = np.array([0.6, 0.8j])
    sc = DecayScenario(bath, ModulationSchedule.pulse_trains(1.0, [PI, 0.3]), [0.5, 0.7], a0, 5.0)
    h = evolve_amplitudes(sc)
    assert np.all(h.W == 0) and np.all(h.J == 0)
    assert np.allclose(h.alpha_tilde, a0[None, :], atol=0)
    assert preservation_fidelity(h, 5.0).value == 1.0


def test_J_zero_at_origin_and_equals_integral_of_W(fig2_bath, fig2_energies):
    mod = ModulationSchedule.pulse_trains(1.0, PI * np.array([1.0, 9.0, 8.0, 7.0]), layout=(4,))
    h = evolve_amplitudes(DecayScenario(fig2_bath, mod, fig2_energies, np.full(4, 0.5), 10.0))
    assert np.all(h.J[0] == 0)
    assert np.allclose(compute_J(h), h.J, rtol=0, atol=1e-12)
    # trapezoid of the grid samples is a second-order estimate of the same integral
    dt = h.t[1] - h.t[0]
    trap = np.sum(0.5 * dt * (h.W[:-1] + h.W_left), axis=0)
    assert np.abs(trap - h.J[-1]).max() < 1e-3 * np.abs(h.J[-1]).max()


def test_J_at_matches_series(fig4_bath):
    mod = ModulationSchedule.pulse_trains(1.0, PI * np.array([1.0, 0.7, 0.58]))
    eng = DecayEngine(DecayScenario(fig4_bath, mod, [0.5] * 3, dicke_vector(3, 1), 8.0))
    th = PI * np.array([0.3, 1.2, 2.5])
    assert np.allclose(eng.J_at(th, 8.0), eng.J_series(th)[-1], atol=1e-13)


def _J_dblquad(bath, om, eps, a, b, t):
    tot = 0j
    edges = np.arange(0, t + 1e-12, 1.0)
    for k in range(len(edges) - 1):
        for k2 in range(k + 1):
            def f(t2, t1):
                return bath.response(t1 - t2)[a, b] * np.conj(eps(a, t1)) * eps(b, t2) * np.exp(1j * om[a] * t1 - 1j * om[b] * t2)
            up = (lambda t1: t1) if k2 == k else (lambda t1, c=k2: c + 1.0)
            for part, unit in ((np.real, 1), (np.imag, 1j)):
                v = integrate.dblquad(lambda t2, t1: part(f(t2, t1)), edges[k], edges[k + 1], k2, up, epsabs=1e-13, epsrel=1e-12)[0]
                tot += unit * v
    return tot


def test_J_independent_double_quadrature():
    bath = GaussianDipoleBath(np.array([[1, 0.5], [0.5, 1]]), np.array([0.2, 0.5]), 1.0)
    om = np.array([0.5, 0.6])
    th = np.array([PI, 0.7 * PI])
    mod = ModulationSchedule.pulse_trains(1.0, th, layout=(2,))
    h = evolve_amplitudes(DecayScenario(bath, mod, om, [1, 0], 3.0, memory="full"))

    def eps(a, t):
        return np.exp(1j * np.floor(t + 1e-12) * th[a])

    for a, b in ((0, 0), (0, 1), (1, 0), (1, 1)):
        ref = _J_dblquad(bath, om, eps, a, b, 3.0)
        assert abs(h.J[-1, a, b] - ref) < 1e-6 * abs(ref)


@pytest.mark.parametrize("w", [0.0, 0.5, 1.0])
def test_long_time_W_is_pi_G(w):
    bath = GaussianDipoleBath(np.array([[1.0]]), np.zeros(1), 1.0)
    sc = DecayScenario(bath, ModulationSchedule.unmodulated((1,)), [w], [1.0], 20.0, memory="full")
    assert compute_W(sc, 20.0)[0, 0].real == pytest.approx(PI * bath.closed_form_spectrum(w)[0, 0], rel=1e-6)


def test_mixing_examples():
    c, A, flag = mixing_decay_parameters([1, 0, 0], 0)
    assert np.allclose(c, [1, 0, 0]) and A == pytest.approx(1.0) and not flag
    c, A, _ = mixing_decay_parameters([0.5, 0.5], 0)
    assert np.allclose(c, [1, 1]) and A == pytest.approx(0.5 * np.sqrt(2))


def test_mixing_flags_vanishing_reference():
    c, A, flag = mixing_decay_parameters([0.0, 0.5], 0)
    assert flag and np.isnan(A) and np.all(np.isnan(c))


def test_fig5_initial_condition_round_trip():
    a0 = amplitudes_from_mixing([1.0, 1.57, 1.64], 1.0)
    c, A, _ = mixing_decay_parameters(a0, 0)
    assert np.allclose(c, [1.0, 1.57, 1.64], atol=1e-14)
    assert A == pytest.approx(1.0, abs=1e-14)


def test_dicke_zero_sum_and_norm():
    for l in (2, 3):
        assert abs(dicke_vector(3, l).sum()) < 1e-14
    assert np.linalg.norm(dicke_vector(3, 1)) == pytest.approx(1.0)


def test_basis_fidelity_at_zero():
    a0 = 0.9 * dicke_vector(3, 2)
    sc = DecayScenario(CorrelatedGaussianDecayBath(0.05, [1.0] * 3), ModulationSchedule.unmodulated((1, 1, 1)), [0.5] * 3, a0, 2.0)
    h = evolve_amplitudes(sc)
    assert entangled_basis_fidelity(h, 2, 0.0) == pytest.approx(0.81, abs=1e-12)


def test_single_channel_residuals_zero():
    h = evolve_amplitudes(scalar_gaussian(3.0))
    assert preservation_residuals(h, 3.0) == (0.0, 0.0, 0.0)


def test_symmetric_global_residuals_zero():
    bath = CorrelatedGaussianDecayBath(0.05, [1.0] * 3)
    mod = ModulationSchedule.pulse_trains(1.0, [PI] * 3)
    h = evolve_amplitudes(DecayScenario(bath, mod, [0.5] * 3, dicke_vector(3, 1), 10.0))
    r = preservation_residuals(h, 10.0)
    assert r.rate_spread < 1e-14 and r.phase_spread < 1e-12


def test_steering_residual_zero_at_target():
    a0 = amplitudes_from_mixing([1.0, 1.57, 1.64], 1.0)
    sc = DecayScenario(CorrelatedGaussianDecayBath(0.05, [0.75, 0.81, 1.0]), ModulationSchedule.unmodulated((1, 1, 1)), [0.5] * 3, a0, 1.0)
    h = evolve_amplitudes(sc)
    assert steering_residual(h, 0.0, [1.0, 1.57, 1.64]) < 1e-28


def test_symmetric_freeze_of_mixing(fig4_bath):
    bath = CorrelatedGaussianDecayBath(0.05, [1.0] * 3)
    mod = ModulationSchedule.pulse_trains(1.0, [PI] * 3)
    h = evolve_amplitudes(DecayScenario(bath, mod, [0.5] * 3, dicke_vector(3, 1), 25.0))
    assert np.abs(h.c[:, 1:] - h.c[0, 1:]).max() < 1e-10


def _min_hermitian_eig(W):
    return np.linalg.eigvalsh(0.5 * (W + np.swapaxes(W.conj(), -1, -2))).min(axis=-1)


def test_norm_non_increasing_where_W_is_dissipative(fig4_bath):
    # pulses make the Hermitian part of W indefinite at some steps (memory backflow);
    # the norm may only grow there
    mod = ModulationSchedule.pulse_trains(1.0, PI * np.array([1.0, 0.7, 0.58]))
    h = evolve_amplitudes(DecayScenario(fig4_bath, mod, [0.5] * 3, dicke_vector(3, 1), 25.0))
    dt = h.t[1] - h.t[0]
    d = np.diff(np.sum(np.abs(h.alpha_tilde) ** 2, axis=1))
    psd = np.minimum.reduce([_min_hermitian_eig(h.W[:-1]), _min_hermitian_eig(h.W_mid), _min_hermitian_eig(h.W_left)]) >= 0
    assert psd.sum() > 100
    assert d[psd].max() <= dt**2


def test_norm_non_increasing_unmodulated():
    h = evolve_amplitudes(scalar_gaussian(10.0, strength=0.3))
    dt = h.t[1] - h.t[0]
    assert np.diff(np.abs(h.alpha_tilde[:, 0]) ** 2).max() <= dt**2


def test_reference_covariance(fig2_bath, fig2_energies):
    th = PI * np.array([1.0, 9.0, 8.0, 7.0])
    a0 = np.array([0.5, 0.3, 0.4j, 0.2])
    perm = np.array([2, 0, 3, 1])
    h = evolve_amplitudes(DecayScenario(
        fig2_bath, ModulationSchedule.pulse_trains(1.0, th, layout=(4,)), fig2_energies, a0, 10.0, reference=0))
    pb = GaussianDipoleBath(fig2_bath.coupling[np.ix_(perm, perm)], fig2_bath.dipole_angles[perm], 1.0)
    new_ref = int(np.where(perm == 0)[0][0])
    hp = evolve_amplitudes(DecayScenario(
        pb, ModulationSchedule.pulse_trains(1.0, th[perm], layout=(4,)), fig2_energies[perm], a0[perm], 10.0,
        reference=new_ref))
    assert np.allclose(hp.J[-1], h.J[-1][np.ix_(perm, perm)], atol=1e-12)
    assert np.allclose(np.abs(hp.A), np.abs(h.A), atol=1e-12)
    assert preservation_fidelity(hp, 10.0).value == pytest.approx(preservation_fidelity(h, 10.0).value, abs=1e-12)
    assert np.allclose(preservation_residuals(hp, 10.0), preservation_residuals(h, 10.0), atol=1e-10)


def test_backends_agree(fig4_bath):
    mod = ModulationSchedule.pulse_trains(1.0, PI * np.array([1.0, 0.7, 0.58]))
    sc = DecayScenario(fig4_bath, mod, [0.5] * 3, dicke_vector(3, 1), 10.0)
    a = DecayEngine(sc, backend="numba").history()
    b = DecayEngine(sc, backend="numpy").history()
    assert np.allclose(a.J, b.J, atol=1e-13)
    assert np.allclose(a.alpha, b.alpha, atol=1e-13)


def test_refuses_coarse_grid():
    bath = GaussianDipoleBath(np.eye(1), np.zeros(1), 1.0)
    sc = DecayScenario(bath, ModulationSchedule.unmodulated((1,)), [10.0], [1.0], 5.0, dt=0.05)
    with pytest.raises(NumericalRefusal, match="grid too coarse"):
        DecayEngine(sc)


def test_dt_aligned_to_tau():
    bath = GaussianDipoleBath(np.eye(1), np.zeros(1), 1.0)
    sc = DecayScenario(bath, ModulationSchedule.pulse_trains(0.7, [PI]), [0.0], [1.0], 5.0, dt=0.03)
    dt = sc.time_step()
    assert dt <= 0.03 and abs(0.7 / dt - round(0.7 / dt)) < 1e-9


def test_off_grid_time_rejected():
    h = evolve_amplitudes(scalar_gaussian(2.0))
    with pytest.raises(ValueError):
        h.index(0.123)
    assert h.index(0.123, nearest=True) == 2


def test_conditions_on_zero_J():
    assert conditions_satisfied(np.zeros((2, 2)))


@pytest.mark.xfail(strict=True, reason="engine gives local F_1 below global at t = 10 (0.759 vs 0.878); see decisions ledger")
def test_fig4_local_fidelity_exceeds_global_after_10():
    bath = CorrelatedGaussianDecayBath(0.05, [0.75, 0.81, 1.0])
    F = {}
    for kind, th in (("global", [1, 1, 1]), ("local", [1, 0.7, 0.58])):
        sc = DecayScenario(bath, ModulationSchedule.pulse_trains(1.0, PI * np.array(th)), [0.5] * 3, dicke_vector(3, 1), 25.0)
        h = evolve_amplitudes(sc)
        F[kind] = [entangled_basis_fidelity(h, 1, t) for t in (10.0, 15.0, 20.0, 25.0)]
    assert all(a > b for a, b in zip(F["local"], F["global"]))


@pytest.mark.xfail(strict=True, reason="engine rate spread at the quoted phases is far above 5%; see decisions ledger")
def test_fig2_quoted_phases_rate_spread_below_5_percent(fig2_bath, fig2_energies):
    mod = ModulationSchedule.pulse_trains(1.0, PI * np.array([1.0, 9.0, 8.0, 7.0]), layout=(4,))
    h = evolve_amplitudes(DecayScenario(fig2_bath, mod, fig2_energies, np.full(4, 0.5), 50.0))
    r = preservation_residuals(h, 50.0)
    assert r.rate_spread < 0.05 * np.mean(h.J[-1].diagonal().real)
