import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decoctl.baths import (
    ChannelIndex,
    CorrelatedGaussianDecayBath,
    ExponentialDephasingBath,
    GaussianDipoleBath,
    TabulatedBath,
    eval_response,
    spectral_density,
)
from decoctl.errors import ChannelIndexError, NumericalRefusal

C1, C2, C3 = ChannelIndex(1, 1), ChannelIndex(1, 2), ChannelIndex(1, 3)


def test_gaussian_dipole_zero_lag(fig2_bath):
    assert eval_response(fig2_bath, C2, C2, 0.0) == pytest.approx(1.0, abs=1e-15)


def test_gaussian_dipole_at_two_tc(fig2_bath):
    assert eval_response(fig2_bath, C2, C2, 2.0).real == pytest.approx(np.exp(-1.0), rel=1e-14)


def test_zero_lag_matches_formula(fig2_bath):
    eta = fig2_bath.dipole_angles
    c = fig2_bath.coupling
    for a in range(4):
        for b in range(4):
            got = eval_response(fig2_bath, ChannelIndex(1, a + 1), ChannelIndex(1, b + 1), 0.0)
            assert got == pytest.approx(c[a, b] * np.cos(eta[a]) * np.cos(eta[b]), abs=1e-15)


def test_correlated_gaussian_zero_lag(fig4_bath):
    for j in (1, 2, 3):
        assert eval_response(fig4_bath, ChannelIndex(j), ChannelIndex(j), 0.0) == pytest.approx(0.05)


def test_correlated_gaussian_cross_term(fig4_bath):
    # ring of radius r0: neighbours at distance r0 * sqrt(3)
    got = eval_response(fig4_bath, ChannelIndex(1), ChannelIndex(2), 0.0).real
    assert got == pytest.approx(0.05 / (1.0 + np.sqrt(3.0)), rel=1e-12)


def test_exponential_dephasing_value(fig6_bath):
    assert eval_response(fig6_bath, ChannelIndex(1), ChannelIndex(1), 2.0) == pytest.approx(0.01 * np.exp(-2.0))


def test_exponential_dephasing_even_and_real(fig6_bath):
    t = np.linspace(-3, 3, 13)
    r = fig6_bath.response(t)
    assert np.allclose(r, r[..., ::-1])
    assert np.all(r.imag == 0)


def test_decorrelated_bath_drops_cross_terms():
    b = ExponentialDephasingBath(0.01, [1.0, 1.0], cross_correlated=False)
    assert b.response(0.3)[0, 1] == 0


def test_index_out_of_bounds(fig2_bath):
    with pytest.raises(ChannelIndexError):
        eval_response(fig2_bath, ChannelIndex(1, 5), C1, 0.0)
    with pytest.raises(ChannelIndexError):
        eval_response(fig2_bath, ChannelIndex(2, 1), C1, 0.0)


@pytest.mark.parametrize("kwargs", [
    {"gamma": -1.0, "correlation_times": [1.0]},
    {"gamma": 0.1, "correlation_times": [0.0]},
])
def test_invalid_parameters(kwargs):
    with pytest.raises(ValueError):
        CorrelatedGaussianDecayBath(**kwargs)
    with pytest.raises(ValueError):
        ExponentialDephasingBath(**kwargs)


def test_asymmetric_coupling_rejected():
    with pytest.raises(ValueError):
        GaussianDipoleBath(np.array([[1.0, 0.2], [0.1, 1.0]]), np.zeros(2), 1.0)


def test_gaussian_spectrum_closed_form():
    b = GaussianDipoleBath(np.eye(1), np.zeros(1), 1.3)
    w = np.linspace(-3, 3, 13)
    got = spectral_density(b, C1, C1, w)
    want = 1.3 / np.sqrt(np.pi) * np.exp(-(w**2) * 1.3**2)
    assert np.isrealobj(got)
    assert np.allclose(got, want, atol=1e-10)


def test_spectrum_real_even_positive(fig2_bath):
    w = np.linspace(0, 4, 9)
    g = spectral_density(fig2_bath, C1, C3, w)
    assert np.isrealobj(g)
    assert np.allclose(g, spectral_density(fig2_bath, C1, C3, -w))
    g_diag = spectral_density(fig2_bath, C1, C1, w)
    assert np.all(g_diag > 0)


def test_spectrum_integrates_to_zero_lag(fig2_bath):
    w = np.linspace(-12, 12, 4801)
    g = spectral_density(fig2_bath, C1, C3, w)
    assert np.trapezoid(g, w) == pytest.approx(eval_response(fig2_bath, C1, C3, 0.0).real, rel=1e-6)


def test_lorentzian_spectrum(fig6_bath):
    # exp(-|t|/2t - |t|/2t) = exp(-|t|) for t_j = 1: half-width 1
    w = np.array([0.0, 0.5, 1.0, 2.0])
    got = spectral_density(fig6_bath, ChannelIndex(1), ChannelIndex(1), w)
    want = 0.01 / np.pi * 1.0 / (1.0 + w**2)
    assert np.allclose(got, want, rtol=2e-3)
    assert np.allclose(fig6_bath.closed_form_spectrum(w)[0, 0], want, rtol=1e-12)


def test_zero_response_zero_spectrum():
    b = CorrelatedGaussianDecayBath(0.0, [1.0, 1.0])
    assert np.all(spectral_density(b, ChannelIndex(1), ChannelIndex(2), np.linspace(-2, 2, 5)) == 0)


def test_tabulated_round_trip():
    g = np.linspace(0, 5, 21)
    v = np.exp(-g)[:, None, None] * np.array([[1.0, 0.2j], [-0.2j, 0.5]])[None]
    b = TabulatedBath(g, v)
    assert np.array_equal(b.response(g), np.moveaxis(v, 0, -1))
    assert np.all(b.response(np.array([5.5, 7.0])) == 0)
    # Hermitian extension to negative lags
    assert np.allclose(b.response(-g[3]), b.response(g[3]).conj().T)


def test_tabulated_non_decaying_refused():
    g = np.linspace(0, 1, 11)
    b = TabulatedBath(g, np.ones((11, 1, 1)))
    with pytest.raises(NumericalRefusal):
        spectral_density(b, C1, C1, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(-5, 5))
def test_conjugate_symmetry(tc, t):
    b = CorrelatedGaussianDecayBath(0.1, [tc, 1.0])
    a, c = ChannelIndex(1), ChannelIndex(2)
    assert eval_response(b, a, c, t) == pytest.approx(np.conj(eval_response(b, c, a, -t)))
