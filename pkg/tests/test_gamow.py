from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import iv

from deltastark.field import FieldSpec, derive_gauge
from deltastark.gamow import (
    ModeOverflowError,
    ThresholdError,
    eval_gamow,
    floquet_mode,
    floquet_residual,
    floquet_residual_parts,
    gamow_from_resonance,
    mode_fourier,
    mode_lambda,
    quasienergy,
    solve_matching,
)
from deltastark.operator import Numerics
from deltastark.resonance import find_pole, undriven_pole
from deltastark.zak import FourierVector

OM = 1.5
G = derive_gauge(FieldSpec.monochromatic(OM, 0.3))
G0 = derive_gauge(FieldSpec.monochromatic(OM, 0.0))
NUM = Numerics(n_f=16)


@pytest.fixture(scope="module")
def driven():
    r = find_pole(G, 0.48 - 0.03j, num=NUM)
    return gamow_from_resonance(r, G)


@pytest.fixture(scope="module")
def bound():
    r = find_pole(G0, undriven_pole(OM) + 0.01j, num=Numerics(n_f=8))
    return gamow_from_resonance(r, G0)


# ---------------------------------------------------------------- modes


def test_zero_exponent_gives_delta_sequence():
    f = mode_fourier(0.0, G, 8)
    assert f[0] == pytest.approx(1.0, abs=1e-15)
    assert np.sum(np.abs(f.coeffs)) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("lam", [0.7 - 0.4j, 1.3, -0.2 + 2.0j])
def test_bessel_generating_identity(lam):
    g = derive_gauge(FieldSpec(OM, (0.4 - 0.3j,)))
    c1 = complex(g.c_coeffs[0])
    f = mode_fourier(lam, g, 12)
    n = f.modes
    exact = iv(n, 2 * lam * abs(c1)) * np.exp(-1j * n * np.angle(c1))
    assert np.max(np.abs(f.coeffs - exact)) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.complex_numbers(max_magnitude=3.0, allow_nan=False, allow_infinity=False))
def test_inverse_exponent_convolves_to_delta(lam):
    a = mode_fourier(lam, G, 24).coeffs
    b = mode_fourier(-lam, G, 24).coeffs
    conv = np.convolve(a, b)[24:-24]
    delta = np.zeros_like(conv)
    delta[conv.size // 2] = 1.0
    assert np.max(np.abs(conv - delta)) < 1e-10


def test_overflow_guard():
    with pytest.raises(ModeOverflowError):
        mode_fourier(1e4, G, 8)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.99), st.integers(-6, 6))
def test_mode_threshold_structure(frac, m):
    sigma = frac * OM
    left = floquet_mode(sigma, m, "left", G0, 4)
    right = floquet_mode(sigma, m, "right", G0, 4)
    if sigma + m * OM < 0:
        assert left.lam.real > 0 and right.lam.real < 0
        assert left.decays and right.decays
    else:
        assert abs(left.lam.real) < 1e-15 and abs(right.lam.real) < 1e-15


def test_lambda_branch():
    assert mode_lambda(-1.0 - 0.0 * OM, 0, OM) == pytest.approx(1.0)
    assert mode_lambda(0.25, 0, OM) == pytest.approx(-0.5j)


# ---------------------------------------------------------------- matching


def test_zero_source_gives_zero_profile():
    gv = solve_matching(0.3 - 0.1j, FourierVector.zeros(6, OM), G)
    assert np.all(gv.psi_L == 0) and np.all(gv.psi_R == 0)


def test_undriven_matching_is_diagonal():
    f = FourierVector(np.linspace(1, 2, 9) + 0.5j, OM)
    sigma = 0.3 * OM - 0.05j
    gv = solve_matching(sigma, f, G0)
    lam = mode_lambda(sigma, gv.modes, OM)
    assert np.allclose(gv.psi_L, f.coeffs / lam, rtol=1e-13)
    assert np.allclose(gv.psi_R, f.coeffs / lam, rtol=1e-13)


def test_matching_conditions_hold(driven):
    t = G.period * np.arange(64) / 64
    gl, gr = driven.boundary_values(t)
    sl, sr = driven.boundary_slopes(t)
    scale = np.max(np.abs(gl))
    assert np.max(np.abs(gl - gr)) < 1e-10 * scale
    assert np.max(np.abs(sr - sl + gl + gr)) < 1e-10 * scale


def test_threshold_is_rejected():
    with pytest.raises(ThresholdError) as info:
        solve_matching(-2 * OM + OM, FourierVector.zeros(4, OM), G)
    assert info.value.m == 1


# ---------------------------------------------------------------- evaluation


def test_periodicity_in_time(driven):
    x = np.linspace(-4, 4, 9)
    a = eval_gamow(driven, x, 0.7, "electric")
    b = eval_gamow(driven, x, 0.7 + G.period, "electric")
    assert np.allclose(a, b, rtol=1e-12)


def test_undriven_profile_is_the_bound_state(bound):
    x = np.linspace(-5, 5, 41)
    n_star = -1  # undriven_pole(1.5) = 0.5 = -1 + 1.5
    for t in (0.0, 1.1, 3.0):
        expected = np.exp(-np.abs(x)) * np.exp(-1j * n_star * OM * t)
        assert np.max(np.abs(eval_gamow(bound, x, t, "electric") - expected)) < 1e-10


def test_gamow_growth_at_large_distance(driven):
    x = np.linspace(5, 10, 21)
    t = G.period * np.arange(32) / 32
    for sign in (1, -1):
        X, T = np.meshgrid(sign * x, t, indexing="ij")
        rms = np.sqrt(np.mean(np.abs(eval_gamow(driven, X, T, "electric")) ** 2, axis=1))
        assert np.all(np.diff(rms) > 0)


def test_gauges_share_modulus(driven):
    X, T = np.meshgrid(np.linspace(-6, 6, 25), np.linspace(0, G.period, 9), indexing="ij")
    e = np.abs(eval_gamow(driven, X, T, "electric"))
    b = np.abs(eval_gamow(driven, X, T, "magnetic"))
    assert np.max(np.abs(e - b)) < 1e-12


def test_quasienergy_shift(driven):
    assert quasienergy(driven, "electric") == pytest.approx(driven.sigma_k + G.a0)
    assert quasienergy(driven, "magnetic") == driven.sigma_k


# ---------------------------------------------------------------- residual


def test_residual_undriven(bound):
    assert floquet_residual(bound) < 1e-8


def test_residual_driven(driven):
    assert floquet_residual(driven) < 1e-4


def test_residual_fourth_order_in_dx(driven):
    coarse = floquet_residual_parts(driven, dx=0.2).pde
    fine = floquet_residual_parts(driven, dx=0.1).pde
    assert np.log2(coarse / fine) == pytest.approx(4.0, abs=0.3)


def test_residual_grid_must_avoid_the_well(driven):
    with pytest.raises(ValueError):
        floquet_residual_parts(driven, x_grid=np.array([0.01, 1.0]))


def test_small_field_limit_recovers_bound_state():
    g = derive_gauge(FieldSpec.monochromatic(OM, 0.02))
    r = find_pole(g, undriven_pole(OM) - 1e-5j, num=NUM)
    gv = gamow_from_resonance(r, g)
    x = np.linspace(-5, 5, 401)
    sig = quasienergy(gv, "electric")
    for t in (0.0, 1.0, 2.5):
        v = eval_gamow(gv, x, np.full_like(x, t), "electric") * np.exp(-1j * sig * t)
        ref = np.exp(1j * t) * np.exp(-np.abs(x))
        assert np.sqrt(np.trapezoid(np.abs(v - ref) ** 2, x)) < 0.05
