from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltastark.field import FieldSpec, derive_gauge, eval_field
from deltastark.operator import (
    BranchPointError,
    ContourQuad,
    NearPoleError,
    Numerics,
    OperatorMatrix,
    branch_sqrt,
    build_K,
    build_y0,
    kf_diag,
    kl_kernel_contour,
    kl_kernel_sum,
    solve_y,
    sqrt_cut,
)
from deltastark.states import InitialState, Piece
from deltastark.zak import TimeSeries, zak_forward

OM = 1.5
G = derive_gauge(FieldSpec.monochromatic(OM, 0.3))
G0 = derive_gauge(FieldSpec.monochromatic(OM, 0.0))
NUM = Numerics(n_f=16)
PSI = InitialState()


class SineBump(InitialState):
    """Odd datum sin(pi x / L0) on [-L0, L0]."""

    def _raw_pieces(self):
        k = np.pi / self.L0
        return [Piece(-0.5j, k, -self.L0, self.L0), Piece(0.5j, -k, -self.L0, self.L0)]


# ---------------------------------------------------------------- branch square root


@pytest.mark.parametrize(
    "z, expected", [(4, 2), (-1, 1j), (-2, 1j * np.sqrt(2)), (1j, np.exp(0.25j * np.pi))]
)
def test_sqrt_cut_examples(z, expected):
    assert sqrt_cut(z) == pytest.approx(expected, abs=1e-15)


def test_sqrt_cut_branch_point_flag():
    b = branch_sqrt(0)
    assert b.value == 0 and b.at_branch_point
    assert not branch_sqrt(1e-30).at_branch_point


def test_sqrt_cut_on_cut_uses_right_limit():
    assert sqrt_cut(-4j) == pytest.approx(sqrt_cut(1e-14 - 4j), abs=1e-6)


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(finite, finite)
def test_sqrt_cut_squares_back(x, y):
    z = complex(x, y)
    if z == 0:
        return
    r = sqrt_cut(z)
    assert r * r == pytest.approx(z, rel=1e-13, abs=1e-300)
    # principal-branch agreement in the upper half plane and on the positive reals
    if y > 0 or (y == 0 and x > 0):
        assert r.real >= -1e-15 * abs(r) and r.imag >= -1e-15 * abs(r)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, np.pi, exclude_max=True), st.floats(0.01, 100.0))
def test_sqrt_cut_continuous_across_upper_half_plane(theta, r):
    a = sqrt_cut(r * np.exp(1j * theta))
    b = sqrt_cut(r * np.exp(1j * (theta + 1e-7)))
    assert abs(a - b) < 1e-6 * np.sqrt(r)


@pytest.mark.parametrize(
    "z, expected", [(-1.0, 1.0), (1j, np.exp(0.25j * np.pi)), (4.0, 0.5j)]
)
def test_kf_diag_examples(z, expected):
    # place z = sigma + n omega with n = 2
    assert kf_diag(z - 2 * OM, 2, OM) == pytest.approx(expected, abs=1e-15)


def test_kf_diag_rejects_branch_point():
    with pytest.raises(BranchPointError):
        kf_diag(-OM, [0, 1, 2], OM)


# ---------------------------------------------------------------- kernels


def _grid(n=6):
    T = G.period
    t = np.linspace(0, T, n, endpoint=False)
    s = np.linspace(T / n, T, n)
    return np.meshgrid(t, s)


def test_kernels_vanish_without_field():
    tt, ss = _grid()
    assert np.all(kl_kernel_sum(0.4 * OM + 0.3j, tt, ss, G0) == 0)
    assert np.all(kl_kernel_contour(0.4 * OM - 0.3j, tt, ss, G0) == 0)


@pytest.mark.parametrize("sigma", [0.4 * OM + 0.3j, 0.2 * OM + 0.05j, 0.8 * OM + 1.5j])
def test_kernel_forms_agree_above_axis(sigma):
    tt, ss = _grid()
    a = kl_kernel_sum(sigma, tt, ss, G)
    b = kl_kernel_contour(sigma, tt, ss, G)
    assert np.max(np.abs(a - b)) < 1e-6 * np.max(np.abs(a))


def test_sum_form_rejects_lower_half_plane():
    with pytest.raises(ValueError):
        kl_kernel_sum(0.5 - 0.1j, 0.1, 0.2, G)


def test_kernel_vanishes_like_sqrt_s():
    sigma = 0.5 * OM + 0.3j
    for s in (1e-4, 1e-5):
        ratio = kl_kernel_sum(sigma, 1.0, s, G) / kl_kernel_sum(sigma, 1.0, s / 4, G)
        assert ratio == pytest.approx(2.0, abs=1e-3)


def test_kernel_decays_at_large_imaginary_sigma():
    t, s = np.meshgrid(np.linspace(0, G.period, 5), np.linspace(0.5, G.period, 5))
    lo = np.abs(kl_kernel_contour(0.5 * OM + 20j, t, s, G))
    hi = np.abs(kl_kernel_contour(0.5 * OM + 1j, t, s, G))
    assert np.all(lo <= 1e-3 * hi)
    assert np.max(lo) < 1e-3 * np.max(hi)


def test_contour_recenters_by_quasi_periodicity():
    # k_{sigma + omega}(t, s) = e^{i omega s} k_sigma(t, s)
    tt, ss = _grid(4)
    sigma = 0.4 * OM - 0.2j
    a = kl_kernel_contour(sigma + OM, tt, ss, G)
    b = np.exp(1j * OM * ss) * kl_kernel_contour(sigma, tt, ss, G)
    assert np.allclose(a, b, atol=1e-13)


# ---------------------------------------------------------------- matrices


def test_undriven_matrix_is_exactly_diagonal():
    sigma = 0.3 * OM + 0.1j
    K = build_K(sigma, G0, NUM)
    assert np.all(K.entries == np.diag(np.diag(K.entries)))
    assert np.allclose(np.diag(K.entries), kf_diag(sigma, K.modes, OM), atol=1e-15)


def test_field_part_and_norm_decay_with_imaginary_sigma():
    norms, field_norms = [], []
    for im in (1.0, 5.0, 20.0):
        K = build_K(0.5 * OM + 1j * im, G, NUM)
        field_part = K.entries - np.diag(kf_diag(K.sigma, K.modes, OM))
        norms.append(np.linalg.norm(K.entries, 2))
        field_norms.append(np.linalg.norm(field_part, 2))
    assert norms[0] > norms[1] > norms[2]
    assert field_norms[0] > field_norms[1] > field_norms[2]
    assert field_norms[2] < 0.1
    # the free diagonal alone is bounded by |sigma|^{-1/2}, which sets the total norm
    assert norms[2] == pytest.approx(1 / np.sqrt(abs(0.5 * OM + 20j)), rel=0.05)


@pytest.mark.parametrize("sigma", [0.4 * OM + 0.2j, 0.4 * OM - 0.2j])
def test_quadrature_refinement(sigma):
    fine = replace(
        NUM,
        t_grid=2 * NUM.t_grid,
        s_panels=2 * NUM.s_panels,
        s_order=48,
        k_max=2 * NUM.k_max,
        contour=ContourQuad(arc=128, ray_order=64),
    )
    a = build_K(sigma, G, NUM).entries
    b = build_K(sigma, G, fine).entries
    assert np.max(np.abs(a - b)) < 1e-6


def test_epsilon_dependence_is_smooth():
    sigma = 0.4 * OM + 0.2j
    base = build_K(sigma, G, NUM).entries
    rates = []
    for de in (1e-3, 5e-4):
        other = build_K(sigma, derive_gauge(FieldSpec.monochromatic(OM, 0.3 + de)), NUM).entries
        rates.append(np.max(np.abs(other - base)) / de)
    assert rates[0] == pytest.approx(rates[1], rel=0.01)


def test_matrix_serialization_is_bit_exact():
    K = build_K(0.4 * OM - 0.1j, G, NUM)
    R = OperatorMatrix.from_bytes(K.to_bytes())
    assert R.entries.tobytes() == K.entries.tobytes()
    assert (R.sigma, R.n_f, R.omega, R.epsilon) == (K.sigma, K.n_f, K.omega, K.epsilon)
    assert len(K.to_bytes()) == 60 + 16 * (2 * NUM.n_f + 1) ** 2


# ---------------------------------------------------------------- y0 and the solve


def test_y0_small_sigma_mode_zero():
    y = build_y0(1e-6, PSI, G, NUM)
    assert y[0] == pytest.approx(500 * PSI.mass() / G.period, rel=1e-2)


def test_y0_vanishes_for_odd_datum_without_field():
    odd = SineBump(normalize=False)
    assert abs(odd.mass()) < 1e-15
    y = build_y0(0.4 * OM + 0.3j, odd, G0, NUM)
    assert np.max(np.abs(y.coeffs)) < 1e-14


def test_y0_rejects_branch_point_proximity():
    with pytest.raises(BranchPointError):
        build_y0(OM * (1 + 1e-15), PSI, G, NUM)


@pytest.mark.parametrize("psi", [PSI, InitialState("truncated_exponential", 4.0)])
def test_y0_matches_time_domain_transform(psi):
    sigma = 0.4 * OM + 1.0j
    series = TimeSeries.sample(
        lambda t: psi.free_evolve(eval_field(G, "c", t), t), 32.0, G.period / 512
    )
    z = zak_forward(series, sigma, OM, NUM.n_f)
    y = build_y0(sigma, psi, G, NUM)
    assert np.linalg.norm(z.coeffs - y.coeffs) < 1e-3 * np.linalg.norm(y.coeffs)


def test_solve_y_undriven_is_componentwise():
    sigma = 0.3 * OM + 0.4j
    y0 = build_y0(sigma, PSI, G0, NUM)
    y = solve_y(sigma, G0, PSI, NUM)
    n = y.modes
    assert np.allclose(y.coeffs, y0.coeffs / (1 - 1j / sqrt_cut(sigma + n * OM)), atol=1e-14)


def test_solve_y_branch_limit():
    # mode 0 tends to i * mass / (2T) at sigma -> 0, from either side of the limit
    exact = solve_y(0.0, G0, PSI, NUM)[0]
    assert exact == pytest.approx(1j * PSI.mass() / (2 * G0.period), rel=1e-12)
    near = solve_y(1e-10, G0, PSI, NUM)[0]
    assert near == pytest.approx(exact, rel=1e-4)
    driven = [solve_y(s, G, PSI, NUM)[0] for s in (0.0, 1e-10)]
    assert driven[1] == pytest.approx(driven[0], rel=1e-4)


def test_solve_y_flags_pole():
    g = derive_gauge(FieldSpec.monochromatic(0.7, 0.0))
    with pytest.raises(NearPoleError) as info:
        solve_y(0.4, g, PSI, Numerics(n_f=8))
    assert info.value.smallest_singular_value < 1e-12
