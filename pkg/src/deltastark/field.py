"""Periodic dipole field, its gauge functions, and the gauge maps.

The field is stored through its positive Fourier modes,

    E(t) = sum_{n=1}^N (eps E_n e^{i n w t} + c.c.),

so it is real by construction. From it follow

    b(t) = sum (B_n e^{i n w t} + c.c.),   B_n = eps E_n / (i n w),
    c(t) = sum (C_n e^{i n w t} + c.c.),   C_n = 2 eps E_n / (i n w)^2,
    a(t) = a0 t + atilde(t),

with b' = E, c' = 2b, a' = b^2, a0 the period mean of b^2 and atilde periodic
with zero mean. The field coefficients use the e^{+i n w t} convention; every
other Fourier object in the package uses e^{-i n w t} (see ``zak``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.interpolate import CubicSpline

Gauge = Literal["electric", "velocity", "magnetic"]
GAUGES = ("electric", "velocity", "magnetic")
SELECTORS = ("E", "b", "c", "a", "atilde")


class GaugeDomainError(ValueError):
    """A spatial shift needs samples outside the supplied x grid."""

    def __init__(self, lo: float, hi: float, grid_lo: float, grid_hi: float):
        self.clipped = (lo, hi)
        super().__init__(
            f"shifted samples span [{lo:.6g}, {hi:.6g}] but the grid covers "
            f"[{grid_lo:.6g}, {grid_hi:.6g}]"
        )


@dataclass(frozen=True)
class FieldSpec:
    """Driving field: frequency, positive-mode coefficients and amplitude scale."""

    omega: float
    coeffs: tuple[complex, ...]
    epsilon: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", tuple(complex(c) for c in self.coeffs))
        if not np.isfinite(self.omega) or self.omega <= 0:
            raise ValueError(f"omega must be positive and finite, got {self.omega}")
        if len(self.coeffs) < 1:
            raise ValueError("a field needs at least one Fourier coefficient")
        if not all(np.isfinite(c.real) and np.isfinite(c.imag) for c in self.coeffs):
            raise ValueError("field coefficients must be finite")
        if not np.isfinite(self.epsilon):
            raise ValueError("epsilon must be finite")

    @property
    def n_modes(self) -> int:
        return len(self.coeffs)

    @property
    def period(self) -> float:
        return 2.0 * np.pi / self.omega

    def scaled(self) -> np.ndarray:
        """Coefficients eps*E_n for n = 1..N."""
        return self.epsilon * np.asarray(self.coeffs, dtype=complex)

    def with_epsilon(self, epsilon: float) -> FieldSpec:
        return FieldSpec(self.omega, self.coeffs, epsilon)

    @classmethod
    def monochromatic(cls, omega: float, epsilon: float) -> FieldSpec:
        """E(t) = epsilon * cos(omega t)."""
        return cls(omega, (0.5,), epsilon)


@dataclass(frozen=True)
class GaugeFunctions:
    """Fourier data of E, b, c and a for one field.

    ``e_coeffs``, ``b_coeffs`` and ``c_coeffs`` hold modes n = 1..N and
    ``atilde_coeffs`` holds modes n = 1..2N; negative modes are the complex
    conjugates, so every function is real.
    """

    omega: float
    e_coeffs: np.ndarray
    b_coeffs: np.ndarray
    c_coeffs: np.ndarray
    a0: float
    atilde_coeffs: np.ndarray
    epsilon: float = field(default=1.0)

    @property
    def period(self) -> float:
        return 2.0 * np.pi / self.omega

    @property
    def is_zero(self) -> bool:
        return not np.any(self.e_coeffs)

    def __call__(self, which: str, t) -> np.ndarray | float:
        return eval_field(self, which, t)

    def c_amplitude(self) -> float:
        """Upper bound on |c(t)|."""
        return float(2.0 * np.sum(np.abs(self.c_coeffs)))

    def key(self) -> tuple:
        """Hashable identity of the field, used by caches."""
        return (
            float(self.omega),
            tuple((float(z.real), float(z.imag)) for z in self.e_coeffs),
        )


def derive_gauge(spec: FieldSpec) -> GaugeFunctions:
    """Gauge functions of ``spec`` from closed-form coefficient ratios."""
    omega = spec.omega
    e = spec.scaled()
    n = np.arange(1, e.size + 1)
    b = e / (1j * n * omega)
    c = 2.0 * e / (1j * n * omega) ** 2

    # b^2 as a two-sided trigonometric polynomial, modes -2N..2N
    N = e.size
    two_sided = np.zeros(2 * N + 1, dtype=complex)
    two_sided[N + 1 :] = b
    two_sided[:N] = np.conj(b[::-1])
    sq = np.convolve(two_sided, two_sided)
    a0 = float(sq[2 * N].real)
    k = np.arange(1, 2 * N + 1)
    atilde = sq[2 * N + 1 :] / (1j * k * omega)
    return GaugeFunctions(
        omega=omega,
        e_coeffs=e,
        b_coeffs=b,
        c_coeffs=c,
        a0=a0,
        atilde_coeffs=atilde,
        epsilon=spec.epsilon,
    )


def _trig(coeffs: np.ndarray, omega: float, t: np.ndarray) -> np.ndarray:
    n = np.arange(1, coeffs.size + 1)
    phase = np.exp(1j * omega * np.multiply.outer(t, n))
    return 2.0 * (phase @ coeffs).real


def _trig_derivative(coeffs: np.ndarray, omega: float, t: np.ndarray) -> np.ndarray:
    n = np.arange(1, coeffs.size + 1)
    return _trig(1j * n * omega * coeffs, omega, t)


def eval_field(g: GaugeFunctions | FieldSpec, which: str, t) -> np.ndarray | float:
    """Evaluate E, b, c, a or atilde at time(s) ``t``."""
    if isinstance(g, FieldSpec):
        g = derive_gauge(g)
    if which not in SELECTORS:
        raise ValueError(f"unknown selector {which!r}; expected one of {SELECTORS}")
    tt = np.asarray(t, dtype=float)
    flat = np.atleast_1d(tt)
    coeffs = {
        "E": g.e_coeffs,
        "b": g.b_coeffs,
        "c": g.c_coeffs,
        "a": g.atilde_coeffs,
        "atilde": g.atilde_coeffs,
    }[which]
    out = _trig(coeffs, g.omega, flat)
    if which == "a":
        out = out + g.a0 * flat
    return out.reshape(tt.shape) if tt.ndim else float(out[0])


def derivative(g: GaugeFunctions, which: str, t) -> np.ndarray:
    """Exact time derivative of E, b, c or atilde."""
    coeffs = {"E": g.e_coeffs, "b": g.b_coeffs, "c": g.c_coeffs, "atilde": g.atilde_coeffs}[
        which
    ]
    return _trig_derivative(coeffs, g.omega, np.atleast_1d(np.asarray(t, dtype=float)))


def gauge_map(
    psi: np.ndarray,
    x: np.ndarray,
    t: np.ndarray,
    source: Gauge,
    target: Gauge,
    g: GaugeFunctions,
    outside: Literal["raise", "zero"] = "raise",
) -> np.ndarray:
    """Transform samples ``psi[i, j] = psi(x[i], t[j])`` between gauges.

    Uses

        psi_v(x, t) = e^{ia} e^{ib(x-c)} psi(x - c, t)
        psi_B(x, t) = e^{ia} e^{ibx} psi(x, t)
        psi_B(x, t) = psi_v(x + c, t)

    and their inverses. Spatial shifts interpolate each time slice with a
    complex cubic spline. When a shift needs data beyond the grid, a
    :class:`GaugeDomainError` is raised unless ``outside="zero"``, in which case
    those samples are set to zero.
    """
    if source not in GAUGES or target not in GAUGES:
        raise ValueError(f"gauges must be among {GAUGES}")
    psi = np.asarray(psi, dtype=complex)
    x = np.asarray(x, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if psi.shape != (x.size, t.size):
        raise ValueError(f"psi has shape {psi.shape}, expected {(x.size, t.size)}")
    dx = np.diff(x)
    if x.size < 4 or np.any(dx <= 0) or np.ptp(dx) > 1e-9 * abs(dx[0]):
        raise ValueError("x grid must be regular, increasing, with at least 4 points")
    if source == target:
        return psi.copy()

    a = eval_field(g, "a", t)
    b = eval_field(g, "b", t)
    c = eval_field(g, "c", t)
    X = x[:, None]

    # (shift, phase): out(x) = phase(x) * in(x + shift)
    if (source, target) == ("electric", "velocity"):
        shift, phase = -c, np.exp(1j * (a + b * (X - c)))
    elif (source, target) == ("velocity", "electric"):
        shift, phase = c, np.exp(-1j * (a + b * X))
    elif (source, target) == ("electric", "magnetic"):
        shift, phase = None, np.exp(1j * (a + b * X))
    elif (source, target) == ("magnetic", "electric"):
        shift, phase = None, np.exp(-1j * (a + b * X))
    elif (source, target) == ("velocity", "magnetic"):
        shift, phase = c, np.ones_like(X * c)
    else:  # magnetic -> velocity
        shift, phase = -c, np.ones_like(X * c)

    if shift is None:
        return phase * psi
    out = np.empty_like(psi)
    for j in range(t.size):
        xs = x + shift[j]
        bad = (xs < x[0] - 1e-12) | (xs > x[-1] + 1e-12)
        if np.any(bad) and outside == "raise":
            raise GaugeDomainError(xs[bad].min(), xs[bad].max(), x[0], x[-1])
        spline = CubicSpline(x, psi[:, j])
        col = spline(np.clip(xs, x[0], x[-1]))
        col[bad] = 0.0
        out[:, j] = col
    return phase * out
