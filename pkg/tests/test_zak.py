from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

from deltastark.zak import (
    CoverageError,
    FourierVector,
    TimeSeries,
    zak_forward,
    zak_invert,
    zak_samples,
)

OMEGA = 1.5
T = 2 * np.pi / OMEGA
SIGMA = 0.4 * OMEGA + 1.0j
LAM = 1.0


def _exp_series(t_end=40.0, dt=T / 512):
    return TimeSeries.sample(lambda t: np.exp(1j * LAM * t), t_end, dt)


def _closed_form(sigma, t):
    t = np.mod(t, T)
    return np.exp(1j * (sigma + LAM) * t) / (1 - np.exp(1j * (sigma + LAM) * T))


def test_zero_series_gives_zero_vector():
    h = TimeSeries(0.0, 0.1, np.zeros(400))
    assert np.all(zak_forward(h, SIGMA, OMEGA, 8).coeffs == 0)


def test_geometric_closed_form_and_half_line_transform():
    z = zak_forward(_exp_series(), SIGMA, OMEGA, 16)
    kappa = SIGMA + z.modes * OMEGA
    expected = OMEGA / (2 * np.pi) * 1j / (kappa + LAM)
    assert np.max(np.abs(z.coeffs - expected)) < 1e-8
    t = np.linspace(0.05, T - 0.05, 9)
    assert np.allclose(zak_samples(_exp_series(), SIGMA, OMEGA, t), _closed_form(SIGMA, t), atol=1e-8)


def test_linearity():
    h1 = _exp_series()
    h2 = TimeSeries.sample(lambda t: np.exp(-0.3 * t) * np.cos(2 * t), 40.0, T / 512)
    a, b = 0.7 - 0.2j, -1.3
    lhs = zak_forward(TimeSeries(0.0, h1.dt, a * h1.values + b * h2.values), SIGMA, OMEGA, 8)
    rhs = a * zak_forward(h1, SIGMA, OMEGA, 8).coeffs + b * zak_forward(h2, SIGMA, OMEGA, 8).coeffs
    assert np.max(np.abs(lhs.coeffs - rhs)) < 1e-12


def test_rejects_lower_half_plane_and_short_series():
    h = _exp_series()
    with pytest.raises(ValueError):
        zak_forward(h, 0.5 - 0.1j, OMEGA, 4)
    with pytest.raises(ValueError):
        zak_forward(h, 0.5, OMEGA, 4)
    with pytest.raises(CoverageError) as info:
        zak_forward(TimeSeries.sample(lambda t: np.ones_like(t), 5.0, 0.01), 0.5 + 0.1j, OMEGA, 4)
    assert info.value.required > 5.0


def test_inversion_roundtrip():
    h = _exp_series(60.0)
    for t in (0.3, 2.0, 5.5):
        field = lambda s: complex(zak_samples(h, s, OMEGA, t, tol=1e-13))
        assert zak_invert(field, t, OMEGA, beta=1.0, n_sigma=64) == pytest.approx(
            np.exp(1j * LAM * t), abs=1e-6
        )


def test_inversion_of_zero_field():
    assert zak_invert(lambda s: 0j, 1.0, OMEGA, beta=0.5) == 0


def test_inversion_checks_quasi_periodicity():
    with pytest.raises(ValueError):
        zak_invert(lambda s: 1.0 + 0j, 1.0, OMEGA, beta=0.5)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(1.0, 2.0), st.floats(0.0, 3 * T))
def test_quasi_periodicity_in_sigma(re, im, t):
    h = _exp_series()
    s = re * OMEGA + 1j * im
    z0 = zak_samples(h, s, OMEGA, t)
    z1 = zak_samples(h, s + OMEGA, OMEGA, t)
    assert z1 == pytest.approx(np.exp(1j * OMEGA * t) * z0, abs=1e-10 * (1 + abs(z0)))
    # periodic in t
    assert zak_samples(h, s, OMEGA, t + T) == pytest.approx(z0, abs=1e-10 * (1 + abs(z0)))


def test_sigma_shift_is_mode_shift():
    h = _exp_series()
    a = zak_forward(h, SIGMA, OMEGA, 10)
    b = zak_forward(h, SIGMA + OMEGA, OMEGA, 10)
    assert np.allclose(b.coeffs[:-1], a.shifted(1).coeffs[:-1], atol=1e-14)


def test_sqrt_start_removes_half_order_error():
    # h = (1 + sqrt t) e^{-t}: transform 1/(1 - i k) + Gamma(3/2)/(1 - i k)^{3/2}
    h = TimeSeries.sample(lambda t: (1 + np.sqrt(t)) * np.exp(-t), 40.0, T / 128)
    kappa = SIGMA + np.arange(-6, 7) * OMEGA
    exact = OMEGA / (2 * np.pi) * (1 / (1 - 1j * kappa) + gamma(1.5) / (1 - 1j * kappa) ** 1.5)
    plain = np.max(np.abs(zak_forward(h, SIGMA, OMEGA, 6).coeffs - exact))
    fitted = np.max(np.abs(zak_forward(h, SIGMA, OMEGA, 6, sqrt_start=4).coeffs - exact))
    assert fitted < 1e-7
    assert fitted < 1e-2 * plain


def test_fourier_vector_evaluation_and_resizing():
    f = FourierVector(np.array([1.0, 2.0j, -0.5]), 2.0)
    t = 0.37
    assert f(t) == pytest.approx(np.exp(2j * t) + 2j - 0.5 * np.exp(-2j * t))
    g = f.resized(3)
    assert g.n_f == 3 and g(t) == pytest.approx(f(t))
    assert f.resized(0).coeffs.tolist() == [2.0j]
    with pytest.raises(ValueError):
        FourierVector(np.ones(4), 1.0)


def test_from_samples_recovers_trig_polynomial():
    t = T * np.arange(32) / 32
    vals = 3 * np.exp(-2j * OMEGA * t) + 0.5j * np.exp(1j * OMEGA * t)
    f = FourierVector.from_samples(vals, 4, OMEGA)
    assert f[2] == pytest.approx(3) and f[-1] == pytest.approx(0.5j)
    assert abs(f[0]) < 1e-14
