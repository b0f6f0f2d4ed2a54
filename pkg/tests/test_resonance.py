from __future__ import annotations

import numpy as np
import pytest

from deltastark.field import FieldSpec, derive_gauge
from deltastark.operator import Numerics, build_y0, scaled_system, sqrt_cut
from deltastark.resonance import (
    BranchPointOutcome,
    JordanChainUnsupported,
    PoleSearchError,
    epsilon_sweep,
    find_pole,
    real_axis_scan,
    resonant_part,
    residue_weight,
    scan_strip,
    undriven_pole,
)
from deltastark.states import InitialState
from deltastark.timedomain import volterra_solve

OM = 1.5
SPEC = FieldSpec.monochromatic(OM, 0.3)
G = derive_gauge(SPEC)
NUM = Numerics(n_f=16)
BUMP = InitialState()


@pytest.fixture(scope="module")
def pole():
    return find_pole(G, 0.48 - 0.03j, num=NUM)


@pytest.mark.parametrize("omega, expected", [(0.7, 0.4), (1.3, 0.3)])
def test_undriven_scan_finds_single_real_candidate(omega, expected):
    g = derive_gauge(FieldSpec.monochromatic(omega, 0.0))
    scan = scan_strip(g, num=Numerics(n_f=8))
    assert len(scan.candidates) == 1
    assert scan.candidates[0] == pytest.approx(expected, abs=1e-10)
    assert scan.candidates[0].imag == 0


def test_undriven_scan_values_are_diagonal_minima():
    g = derive_gauge(FieldSpec.monochromatic(0.7, 0.0))
    num = Numerics(n_f=8)
    scan = scan_strip(g, resolution=(5, 4), num=num, refine=False)
    n = np.arange(-8, 9)
    for i, im in enumerate(scan.im):
        for j, re in enumerate(scan.re):
            expected = np.min(np.abs(1 - 1j / sqrt_cut(complex(re, im) + n * 0.7)))
            assert scan.values[i, j] == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("omega", [0.7, 1.3])
def test_undriven_pole(omega):
    g = derive_gauge(FieldSpec.monochromatic(omega, 0.0))
    r = find_pole(g, undriven_pole(omega) + 0.01j, num=Numerics(n_f=8))
    assert abs(r.sigma_k - undriven_pole(omega)) < 1e-10
    assert r.order == 1 and r.gamma_k == 0.0


def test_driven_pole_invariants(pole):
    assert pole.gamma_k > 0
    assert pole.residual < 1e-8
    assert abs(pole.norm_deriv) > 1e-10 and pole.order == 1
    assert 0 < pole.sigma_k.real < OM


def test_pole_continuity_in_epsilon():
    g = derive_gauge(FieldSpec.monochromatic(OM, 1e-3))
    r = find_pole(g, undriven_pole(OM), num=NUM)
    assert abs(r.sigma_k - undriven_pole(OM)) < 1e-3
    assert 0 <= r.gamma_k < 1e-6


def test_pole_is_independent_of_initial_state(pole):
    # locate the pole of <w, (1 - K)^{-1} y0> separately for two data
    w = pole.pi_left.coeffs

    def inverse_projection(sigma, psi):
        M, rhs = scaled_system(sigma, G, psi, NUM)
        return 1.0 / (w.conj() @ np.linalg.solve(M, rhs))

    found = []
    for psi in (BUMP, InitialState("truncated_exponential", 3.0)):
        a, b = pole.sigma_k + 0.01, pole.sigma_k + 0.011
        fa, fb = inverse_projection(a, psi), inverse_projection(b, psi)
        for _ in range(30):
            a, fa, b = b, fb, b - fb * (b - a) / (fb - fa)
            fb = inverse_projection(b, psi)
            if abs(b - a) < 1e-13:
                break
        found.append(b)
    assert abs(found[0] - found[1]) < 1e-9
    assert abs(found[0] - pole.sigma_k) < 1e-9


def test_truncation_robustness(pole):
    finer = find_pole(G, pole.sigma_k, num=NUM.with_n_f(32))
    assert abs(finer.sigma_k - pole.sigma_k) < 1e-6


def test_residue_weight_undriven_diagonal_case():
    g = derive_gauge(FieldSpec.monochromatic(0.7, 0.0))
    num = Numerics(n_f=8)
    r = find_pole(g, 0.41, num=num)
    psi = InitialState("truncated_exponential", 6.0)
    y0 = build_y0(r.sigma_k, psi, g, num)
    alpha = residue_weight(r, y0)
    n_star = -2  # 0.4 - 2 * 0.7 = -1
    # M'(sigma_0) = -1/2 on the resonant mode, so alpha Pi = (4 pi i / omega) y0_{n*}
    term = alpha * r.pi_right[n_star]
    assert term == pytest.approx(4j * np.pi / 0.7 * y0[n_star], rel=1e-9)
    assert np.sum(np.abs(r.pi_right.coeffs) > 1e-12) == 1


def test_residue_weight_is_linear_in_the_datum(pole):
    a1 = residue_weight(pole, build_y0(pole.sigma_k, BUMP, G, NUM))
    raw = InitialState(normalize=False)
    a2 = residue_weight(pole, build_y0(pole.sigma_k, raw, G, NUM))
    assert a1 == pytest.approx(BUMP.amplitude * a2, rel=1e-12)


def test_residue_weight_rejects_higher_order(pole):
    from dataclasses import replace

    with pytest.raises(JordanChainUnsupported):
        residue_weight(replace(pole, order=2), build_y0(pole.sigma_k, BUMP, G, NUM))


def test_resonant_term_matches_time_domain(pole):
    run = volterra_solve(SPEC, BUMP, 30.0)
    alpha = residue_weight(pole, build_y0(pole.sigma_k, BUMP, G, NUM))
    t = run.times
    sel = (t >= 10.0) & (t <= 30.0)
    res = resonant_part(pole, alpha, t[sel])
    err = np.max(np.abs(run.Y.values[sel] - res)) / np.max(np.abs(res))
    assert err < 0.05


def test_epsilon_sweep_scaling():
    sw = epsilon_sweep(SPEC, [0.05, 0.1, 0.2], NUM)
    assert sw.error is None
    gam = [r.gamma for r in sw.rows]
    assert all(g > 0 for g in gam) and gam == sorted(gam)
    assert sw.slope == pytest.approx(2.0, abs=0.2)
    assert gam[1] / gam[0] == pytest.approx(4.0, rel=0.2)


def test_epsilon_sweep_requires_increasing_list():
    with pytest.raises(ValueError):
        epsilon_sweep(SPEC, [0.2, 0.1], NUM)


def test_search_rejects_upper_half_plane_and_threshold():
    g0 = derive_gauge(FieldSpec.monochromatic(OM, 0.0))
    with pytest.raises(BranchPointOutcome):
        find_pole(g0, 1e-9 + 1e-9j, num=Numerics(n_f=4))
    with pytest.raises(PoleSearchError):
        find_pole(G, 0.48 - 0.03j, num=NUM, max_iter=1)


def test_real_axis_scan_undriven_touches_zero():
    g = derive_gauge(FieldSpec.monochromatic(0.7, 0.0))
    scan = real_axis_scan(g, n_points=24, num=Numerics(n_f=8))
    assert scan.minimum < 1e-6
    assert scan.location == pytest.approx(0.4, abs=1e-6)


def test_real_axis_margin_grows_with_field():
    small = real_axis_scan(derive_gauge(SPEC.with_epsilon(0.05)), n_points=24, num=NUM)
    large = real_axis_scan(G, n_points=24, num=NUM)
    assert 0 < small.minimum < large.minimum
    assert np.all(large.values >= 0)
