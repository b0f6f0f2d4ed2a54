r"""Spatial profile of a resonance from Floquet-mode matching at the well.

In the frame where the well sits at x = 0 (psi_B(x, t) = psi_v(x + c(t), t)) the
free equation i psi_t = -psi_xx + 2 i b psi_x has the exact solutions

.. math::

    e^{\pm\lambda_m (x + c(t))} e^{-i(\sigma + m\omega) t},
    \qquad \lambda_m = -i\,\mathrm{sqrt\_cut}(\sigma + m\omega),

with Re lambda_m > 0 for closed channels. The left profile uses the + sign,
the right profile the - sign, so on the physical sheet both decay away from the
well; for Im sigma < 0 the open channels grow instead (outgoing Gamow waves).
Writing T^{\pm}_{n,m} for the e^{-i n omega t} coefficient of
e^{\pm lambda_m c(t)} e^{-i m omega t}, the amplitudes l, r solve

    T^+ l = T^- r                                   (continuity)
    -(T^- Lambda r) - (T^+ Lambda l) = -2 f          (derivative jump)

for a boundary source f. Then Gamma(0, t) = T^+ l equals K(sigma) f, and at a pole
f = pi_right makes Gamma a Floquet resonance.
"""

from __future__ import annotations

from dataclasses import dataclass
import threading
from typing import Literal

import numpy as np

from .field import GaugeFunctions, eval_field
from .operator import sqrt_cut
from .zak import FourierVector, fourier_matrix_from_samples

Side = Literal["left", "right"]
GaugeName = Literal["magnetic", "electric", "velocity"]

OVERFLOW_EXP = 700.0


class ModeOverflowError(OverflowError):
    """exp(lambda c) or exp(lambda x) would overflow a double."""


class ThresholdError(ValueError):
    """sigma + m omega = 0 makes the matching system singular."""

    def __init__(self, m: int):
        self.m = m
        super().__init__(f"sigma sits on the threshold of mode m={m}; matching is singular")


def mode_lambda(sigma: complex, m, omega: float) -> np.ndarray:
    return -1j * sqrt_cut(sigma + np.asarray(m) * omega)


@dataclass(frozen=True)
class FloquetMode:
    """Free solution e^{lam (x + c(t))} e^{-i m omega t} on one side of the well.

    ``lam`` carries the side sign: -i sqrt_cut(sigma + m omega) on the left and
    +i sqrt_cut(sigma + m omega) on the right. ``tcoeffs`` holds e^{lam c(t)}.
    """

    m: int
    side: Side
    lam: complex
    tcoeffs: FourierVector

    @property
    def decays(self) -> bool:
        """Whether the mode decays away from the well on its side."""
        return self.lam.real > 0 if self.side == "left" else self.lam.real < 0


def _c_samples(g: GaugeFunctions, t_grid: int) -> np.ndarray:
    t = g.period * np.arange(t_grid) / t_grid
    return eval_field(g, "c", t)


def _guard(exponent_bound: float) -> None:
    if exponent_bound > OVERFLOW_EXP:
        raise ModeOverflowError(
            f"|Re lambda| max|c| = {exponent_bound:.3g} exceeds {OVERFLOW_EXP}; reduce n_f"
        )


def mode_fourier(lam: complex, g: GaugeFunctions, n_f: int, t_grid: int | None = None) -> FourierVector:
    """Coefficients of e^{lam c(t)} in the basis e^{-i n omega t}, |n| <= n_f.

    The function is entire in t, so FFT sampling converges spectrally.
    """
    lam = complex(lam)
    if not np.isfinite(lam):
        raise ValueError("lambda must be finite")
    _guard(abs(lam.real) * g.c_amplitude())
    M = t_grid if t_grid is not None else max(64, 8 * n_f)
    vals = np.exp(lam * _c_samples(g, M))
    return FourierVector.from_samples(vals, n_f, g.omega)


def floquet_mode(sigma: complex, m: int, side: Side, g: GaugeFunctions, n_f: int) -> FloquetMode:
    sign = 1.0 if side == "left" else -1.0
    lam = sign * complex(mode_lambda(sigma, m, g.omega))
    return FloquetMode(m, side, lam, mode_fourier(lam, g, n_f))


_TRANSFER_CACHE: dict[tuple, tuple] = {}
_TRANSFER_LOCK = threading.Lock()


def _transfer(sigma: complex, n_f: int, g: GaugeFunctions):
    m = np.arange(-n_f, n_f + 1)
    lam = mode_lambda(sigma, m, g.omega)
    _guard(np.abs(lam.real).max() * g.c_amplitude())
    M = max(64, 8 * n_f)
    c = _c_samples(g, M)
    out = []
    for sign in (1.0, -1.0):
        E = np.exp(sign * np.multiply.outer(c, lam))
        coef = fourier_matrix_from_samples(E, 2 * n_f)
        rows = m[:, None] - m[None, :] + 2 * n_f
        out.append(coef[rows, np.arange(m.size)[None, :]])
    return lam, out[0], out[1]


def transfer_matrices(sigma: complex, g: GaugeFunctions, n_f: int):
    """(lambda, T^+, T^-) for modes -n_f..n_f, cached per (sigma, field, n_f)."""
    key = (complex(sigma), g.key(), n_f)
    with _TRANSFER_LOCK:
        hit = _TRANSFER_CACHE.get(key)
        if hit is None:
            if len(_TRANSFER_CACHE) >= 32:
                _TRANSFER_CACHE.pop(next(iter(_TRANSFER_CACHE)))
            hit = _TRANSFER_CACHE[key] = _transfer(complex(sigma), n_f, g)
    return hit


@dataclass(frozen=True)
class GamowVector:
    """Left/right mode amplitudes of a profile, magnetic-frame convention."""

    sigma_k: complex
    psi_L: np.ndarray
    psi_R: np.ndarray
    lam: np.ndarray
    omega: float
    gauge: GaugeFunctions

    @property
    def n_f(self) -> int:
        return (self.psi_L.size - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.n_f, self.n_f + 1)

    def scaled(self, factor: complex) -> GamowVector:
        return GamowVector(
            self.sigma_k, factor * self.psi_L, factor * self.psi_R, self.lam, self.omega, self.gauge
        )

    def cutoff_mode(self) -> int:
        """Smallest m with Re sigma_k + m omega > 0 (first open channel)."""
        return int(np.floor(-self.sigma_k.real / self.omega)) + 1

    def boundary_values(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Gamma(0-, t) and Gamma(0+, t)."""
        return self._side_sum(0.0, t, "left", 0), self._side_sum(0.0, t, "right", 0)

    def boundary_slopes(self, t) -> tuple[np.ndarray, np.ndarray]:
        """d Gamma / dx at 0- and 0+."""
        return self._side_sum(0.0, t, "left", 1), self._side_sum(0.0, t, "right", 1)

    def _side_sum(self, x, t, side: Side, deriv: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        x, t = np.broadcast_arrays(x, t)
        c = eval_field(self.gauge, "c", t.ravel()).reshape(t.shape) if t.size else t
        sign = 1.0 if side == "left" else -1.0
        coef = self.psi_L if side == "left" else self.psi_R
        lam = sign * self.lam
        expo = np.multiply.outer(x + c, lam)
        _guard(float(np.max(np.abs(expo.real))) if expo.size else 0.0)
        phase = np.exp(expo - 1j * self.omega * np.multiply.outer(t, self.modes))
        return (phase * (lam**deriv)) @ coef


def solve_matching(sigma_k: complex, f: FourierVector, g: GaugeFunctions) -> GamowVector:
    """Mode amplitudes for boundary source ``f`` (continuity and derivative jump at 0)."""
    sigma_k = complex(sigma_k)
    n_f = f.n_f
    m = np.arange(-n_f, n_f + 1)
    z = sigma_k + m * g.omega
    if np.any(z == 0):
        raise ThresholdError(int(m[np.flatnonzero(z == 0)[0]]))
    lam, Tp, Tm = transfer_matrices(sigma_k, g, n_f)
    N = m.size
    A = np.zeros((2 * N, 2 * N), dtype=complex)
    A[:N, :N] = Tp
    A[:N, N:] = -Tm
    A[N:, :N] = -Tp * lam[None, :]
    A[N:, N:] = -Tm * lam[None, :]
    rhs = np.concatenate([np.zeros(N, dtype=complex), -2.0 * f.coeffs])
    sol = np.linalg.solve(A, rhs)
    return GamowVector(sigma_k, sol[:N], sol[N:], lam, g.omega, g)


def resonant_mode(sigma_k: complex, omega: float) -> int:
    """Mode n* whose channel energy sigma + n* omega is closest to the bound energy -1."""
    return int(round((-1.0 - sigma_k.real) / omega))


def eval_gamow(gv: GamowVector, x, t, gauge: GaugeName = "magnetic") -> np.ndarray:
    """Periodic profile Gamma(x, t) in the requested gauge.

    magnetic: well at x = 0, quasienergy sigma_k.
    electric: e^{-i b(t) x - i atilde(t)} Gamma_B(x, t), quasienergy sigma_k + a0.
    velocity: Gamma_B(x - c(t), t), quasienergy sigma_k.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    x, t = np.broadcast_arrays(x, t)
    g = gv.gauge
    xb = x - eval_field(g, "c", t.ravel()).reshape(t.shape) if gauge == "velocity" else x
    left = xb < 0
    out = np.where(
        left,
        gv._side_sum(np.where(left, xb, 0.0), t, "left", 0),
        gv._side_sum(np.where(left, 0.0, xb), t, "right", 0),
    )
    if gauge == "electric":
        b = eval_field(g, "b", t.ravel()).reshape(t.shape)
        at = eval_field(g, "atilde", t.ravel()).reshape(t.shape)
        out = out * np.exp(-1j * b * x - 1j * at)
    elif gauge not in ("magnetic", "velocity"):
        raise ValueError(f"unknown gauge {gauge!r}")
    return out


def quasienergy(gv: GamowVector, gauge: GaugeName = "magnetic") -> complex:
    return gv.sigma_k + (gv.gauge.a0 if gauge == "electric" else 0.0)


@dataclass(frozen=True)
class ResidualReport:
    pde: float
    jump: float
    continuity: float

    @property
    def total(self) -> float:
        return self.pde + self.jump + self.continuity


def floquet_residual_parts(
    gv: GamowVector,
    x_grid: np.ndarray | None = None,
    t_grid: int = 128,
    dx: float = 1e-2,
) -> ResidualReport:
    r"""Residual of (-i d_t - d_x^2 + E(t) x - sigma_E) Gamma_E = 0 and of the well conditions.

    The PDE part uses the electric-gauge profile with quasienergy
    sigma_k + a0, spectral differentiation in t and fourth-order central
    differences of step ``dx`` in x, on ``x_grid`` (which should avoid a
    neighborhood of 0). It is normalized by the sum of the norms of the
    individual terms. The jump part is
    || d_x Gamma(0+) - d_x Gamma(0-) + 2 Gamma(0) || / ||Gamma(0)|| and the
    continuity part || Gamma(0+) - Gamma(0-) || / ||Gamma(0)||, both over a
    full period (so modes outside the truncation count).
    """
    g = gv.gauge
    om = gv.omega
    if x_grid is None:
        x_grid = np.concatenate([np.linspace(-4.0, -0.5, 36), np.linspace(0.5, 4.0, 36)])
    x = np.asarray(x_grid, dtype=float)
    if np.any(np.abs(x) < 2.5 * dx):
        raise ValueError("x grid must stay 2 dx away from the well")
    t = g.period * np.arange(t_grid) / t_grid
    X, Tt = np.meshgrid(x, t, indexing="ij")
    G = eval_gamow(gv, X, Tt, "electric")
    # d/dt spectrally along axis 1
    k = np.fft.fftfreq(t_grid, d=1.0 / t_grid) * om
    Gt = np.fft.ifft(1j * k[None, :] * np.fft.fft(G, axis=1), axis=1)
    stencil = [(-2, -1.0 / 12), (-1, 4.0 / 3), (0, -5.0 / 2), (1, 4.0 / 3), (2, -1.0 / 12)]
    Gxx = sum(w * eval_gamow(gv, X + j * dx, Tt, "electric") for j, w in stencil) / dx**2
    E = eval_field(g, "E", t)[None, :]
    sig = quasienergy(gv, "electric")
    terms = [-1j * Gt, -Gxx, E * X * G, -sig * G]
    R = sum(terms)
    pde = float(np.linalg.norm(R) / sum(np.linalg.norm(v) for v in terms))
    gl, gr = gv.boundary_values(t)
    sl, sr = gv.boundary_slopes(t)
    scale = max(np.linalg.norm(0.5 * (gl + gr)), 1e-300)
    jump = float(np.linalg.norm(sr - sl + (gl + gr)) / scale)
    cont = float(np.linalg.norm(gr - gl) / scale)
    return ResidualReport(pde, jump, cont)


def floquet_residual(gv: GamowVector, x_grid: np.ndarray | None = None, **kw) -> float:
    """Total relative residual (PDE off the well plus the well conditions)."""
    return floquet_residual_parts(gv, x_grid, **kw).total


def gamow_from_resonance(r, g: GaugeFunctions, normalize: bool = True) -> GamowVector:
    """Profile attached to a located pole (a ``ResonanceResult``).

    With ``normalize`` the amplitude is fixed so that the resonant mode n*
    of the boundary source equals 1, which makes the undriven limit
    e^{-|x|} e^{-i n* omega t} exactly.
    """
    f = r.pi_right
    if normalize:
        n_star = resonant_mode(r.sigma_k, g.omega)
        f = f.scaled(1.0 / f[n_star])
    return solve_matching(r.sigma_k, f, g)
