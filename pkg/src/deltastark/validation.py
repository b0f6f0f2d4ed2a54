"""Built-in oracle checks, each comparing two independent computations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import iv

from .field import FieldSpec, derive_gauge, eval_field
from .gamow import mode_fourier
from .operator import Numerics, build_y0, kl_kernel_contour, kl_kernel_sum
from .resonance import find_pole, undriven_pole
from .zak import TimeSeries, zak_forward


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    error: float
    tolerance: float
    detail: str


def _check(name: str, error: float, tol: float) -> Check:
    ok = bool(np.isfinite(error) and error <= tol)
    return Check(name, ok, float(error), tol, f"error {error:.3e} (tolerance {tol:.1e})")


def kernel_routes(spec: FieldSpec, num: Numerics = Numerics()) -> Check:
    """Period sum against contour continuation of the K_L kernel at Im sigma > 0."""
    g = derive_gauge(spec.with_epsilon(spec.epsilon or 0.3))
    om = g.omega
    t = np.linspace(0.0, g.period, 7, endpoint=False)
    s = np.array([0.05, 0.4, 1.3, 2.9, 0.8 * g.period])
    tt, ss = np.meshgrid(t, s)
    err = 0.0
    for sigma in (0.4 * om + 0.3j, 0.7 * om + 0.05j):
        a = kl_kernel_sum(sigma, tt, ss, g, num.k_max)
        b = kl_kernel_contour(sigma, tt, ss, g, num.contour)
        err = max(err, float(np.max(np.abs(a - b)) / np.max(np.abs(a))))
    return _check("kernel_routes", err, 1e-9)


def y0_vs_time_domain(spec: FieldSpec, psi0, num: Numerics = Numerics()) -> Check:
    """Closed-form y0 against the Zak transform of sampled free evolution."""
    g = derive_gauge(spec)
    om = g.omega
    sigma = 0.4 * om + 1.0j
    series = TimeSeries.sample(
        lambda t: psi0.free_evolve(eval_field(g, "c", t), t), 32.0, g.period / 512
    )
    z = zak_forward(series, sigma, om, num.n_f)
    y = build_y0(sigma, psi0, g, num)
    err = float(np.linalg.norm(z.coeffs - y.coeffs) / np.linalg.norm(y.coeffs))
    return _check("y0_time_domain", err, 5e-3)


def bessel_identity(omega: float = 1.5, amplitude: complex = 0.4 - 0.3j) -> Check:
    """Mode n of e^{lam c(t)} for a single harmonic equals I_n(2 lam |C_1|) e^{-i n phi}."""
    g = derive_gauge(FieldSpec(omega, (amplitude,)))
    c1 = complex(g.c_coeffs[0])
    r, phi = abs(c1), np.angle(c1)
    lam = 0.7 - 0.4j
    n_f = 12
    f = mode_fourier(lam, g, n_f)
    n = f.modes
    exact = iv(n, 2.0 * lam * r) * np.exp(-1j * n * phi)
    err = float(np.max(np.abs(f.coeffs - exact)))
    return _check("bessel_identity", err, 1e-12)


def undriven_pole_check(omega: float, num: Numerics = Numerics()) -> Check:
    """Pole of the undriven problem sits at the folded bound-state energy."""
    g = derive_gauge(FieldSpec.monochromatic(omega, 0.0))
    target = undriven_pole(omega)
    r = find_pole(g, target + 0.05 * omega - 0.01j, num=num.with_n_f(min(num.n_f, 8)))
    return _check("undriven_pole", abs(r.sigma_k - target), 1e-10)


def run_checks(cfg) -> list[Check]:
    """All oracle checks for a run configuration."""
    return [
        kernel_routes(cfg.field, cfg.numerics),
        y0_vs_time_domain(cfg.field, cfg.initial_state, cfg.numerics),
        bessel_identity(cfg.field.omega),
        undriven_pole_check(cfg.field.omega, cfg.numerics),
    ]
