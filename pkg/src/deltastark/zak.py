r"""Zak transform of causal time signals and its inversion.

For a signal h(t) that vanishes for t < 0,

.. math::

    Z[h](\sigma, t) = \sum_j e^{i\sigma(t + 2\pi j/\omega)} h(t + 2\pi j/\omega),

which is periodic in t and quasi-periodic in sigma:
Z(sigma + omega, t) = e^{i omega t} Z(sigma, t).

Fourier convention: throughout the package the periodic t-dependence is
expanded as sum_n f_n e^{-i n omega t}. By Poisson summation the n-th
coefficient of Z[h] equals (omega / 2 pi) * hhat(sigma + n omega) with
hhat(k) = int_0^inf e^{i k t} h(t) dt.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from scipy.special import gamma as gamma_fn

from .quadrature import exp_moments


@dataclass(frozen=True)
class FourierVector:
    """Coefficients f_n, n = -n_f..n_f, of sum_n f_n e^{-i n omega t}."""

    coeffs: np.ndarray
    omega: float

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 1 or c.size % 2 != 1:
            raise ValueError("FourierVector needs an odd number (2 n_f + 1) of coefficients")
        object.__setattr__(self, "coeffs", c)

    @property
    def n_f(self) -> int:
        return (self.coeffs.size - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.n_f, self.n_f + 1)

    def __getitem__(self, n: int) -> complex:
        if abs(n) > self.n_f:
            return 0j
        return complex(self.coeffs[n + self.n_f])

    def __call__(self, t) -> np.ndarray:
        tt = np.asarray(t, dtype=float)
        phase = np.exp(-1j * self.omega * np.multiply.outer(tt, self.modes))
        return phase @ self.coeffs

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def scaled(self, factor: complex) -> FourierVector:
        return FourierVector(factor * self.coeffs, self.omega)

    def resized(self, n_f: int) -> FourierVector:
        """Truncate or zero-pad to a new order."""
        out = np.zeros(2 * n_f + 1, dtype=complex)
        m = min(n_f, self.n_f)
        out[n_f - m : n_f + m + 1] = self.coeffs[self.n_f - m : self.n_f + m + 1]
        return FourierVector(out, self.omega)

    def shifted(self, k: int) -> FourierVector:
        """Coefficients of e^{i k omega t} f(t): mode n moves to n - k.

        This is the bookkeeping behind Z(sigma + k omega, t) = e^{i k omega t} Z(sigma, t).
        Modes pushed past the truncation are dropped.
        """
        out = np.zeros_like(self.coeffs)
        n = self.modes
        src = n + k
        ok = np.abs(src) <= self.n_f
        out[ok] = self.coeffs[src[ok] + self.n_f]
        return FourierVector(out, self.omega)

    @classmethod
    def zeros(cls, n_f: int, omega: float) -> FourierVector:
        return cls(np.zeros(2 * n_f + 1, dtype=complex), omega)

    @classmethod
    def unit(cls, n: int, n_f: int, omega: float) -> FourierVector:
        v = np.zeros(2 * n_f + 1, dtype=complex)
        v[n + n_f] = 1.0
        return cls(v, omega)

    @classmethod
    def from_samples(cls, values: np.ndarray, n_f: int, omega: float) -> FourierVector:
        """Discrete coefficients from samples on t_j = j T / M, j < M."""
        values = np.asarray(values, dtype=complex)
        M = values.size
        if M < 2 * n_f + 1:
            raise ValueError(f"{M} samples cannot carry {2 * n_f + 1} modes")
        c = np.fft.ifft(values)
        n = np.arange(-n_f, n_f + 1)
        return cls(c[n % M], omega)


def fourier_matrix_from_samples(values: np.ndarray, n_f: int) -> np.ndarray:
    """Coefficients along axis 0 of samples on a uniform one-period grid."""
    M = values.shape[0]
    c = np.fft.ifft(values, axis=0)
    n = np.arange(-n_f, n_f + 1)
    return c[n % M]


@dataclass(frozen=True)
class TimeSeries:
    """Uniform samples of a causal signal; the signal is zero before ``t0``."""

    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=complex)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(v)):
            raise ValueError("time series contains non-finite samples")
        object.__setattr__(self, "values", v)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.values.size - 1)

    def spline(self) -> CubicSpline:
        return CubicSpline(self.times, self.values)

    @classmethod
    def sample(cls, f: Callable, t_end: float, dt: float) -> TimeSeries:
        n = int(round(t_end / dt))
        t = dt * np.arange(n + 1)
        return cls(0.0, dt, f(t))


class CoverageError(ValueError):
    """The series is too short for the periodization to converge."""

    def __init__(self, required: float, available: float):
        self.required = required
        super().__init__(
            f"series ends at t={available:.6g}; need t >= {required:.6g} for the tail bound"
        )


def _required_length(h: TimeSeries, sigma: complex, tol: float) -> float:
    scale = max(np.abs(h.values).max(), 1e-300)
    return np.log(scale / tol) / sigma.imag


def zak_samples(
    h: TimeSeries, sigma: complex, omega: float, t, tol: float = 1e-12
) -> np.ndarray:
    """Z[h](sigma, t) by direct periodization, with cubic interpolation off-grid."""
    sigma = complex(sigma)
    if sigma.imag <= 0:
        raise ValueError("zak transform needs Im sigma > 0; continue analytically instead")
    need = _required_length(h, sigma, tol)
    if h.t_end < need:
        raise CoverageError(need, h.t_end)
    T = 2.0 * np.pi / omega
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    base = np.mod(tt, T)
    n_per = int(np.ceil(h.t_end / T)) + 1
    shifts = base[:, None] + T * np.arange(n_per)[None, :]
    spline = h.spline()
    inside = shifts <= h.t_end
    vals = np.where(inside, spline(np.minimum(shifts, h.t_end)), 0.0)
    # exact samples where the shifted time lands on the grid
    idx = np.rint((shifts - h.t0) / h.dt).astype(int)
    on_grid = inside & (np.abs(shifts - h.t0 - idx * h.dt) < 1e-9 * h.dt)
    vals = np.where(on_grid, h.values[np.clip(idx, 0, h.values.size - 1)], vals)
    z = np.sum(np.exp(1j * sigma * shifts) * vals, axis=1)
    # Z is periodic in t; the representative in [0, T) carries the value
    return z.reshape(np.shape(t)) if np.ndim(t) else complex(z[0])


def zak_samples_fourier(
    h: TimeSeries, sigma: complex, omega: float, n_f: int, t_grid: int = 256
) -> FourierVector:
    """Discrete Fourier data of the periodized samples on a ``t_grid`` grid.

    This is the FFT route; it aliases the 1/n tail produced by the jump of
    Z[h] at t = 0, so it is only used to cross-check :func:`zak_forward` on
    low modes.
    """
    T = 2.0 * np.pi / omega
    t = T * np.arange(t_grid) / t_grid
    return FourierVector.from_samples(zak_samples(h, sigma, omega, t), n_f, omega)


def zak_invert(
    field: Callable[[complex], FourierVector | complex],
    t: float,
    omega: float,
    beta: float,
    n_sigma: int = 128,
    check_tol: float = 1e-10,
) -> complex:
    r"""h(t) = omega^{-1} \int_{i beta}^{i beta + omega} e^{-i sigma t} Z(sigma, t) d sigma.

    ``field`` returns either Z(sigma, t) directly or a FourierVector evaluated
    at ``t``. The integrand is periodic across the strip, so the trapezoid rule
    converges spectrally. Quasi-periodicity is checked at the left end.
    """

    def integrand(sigma: complex) -> complex:
        z = field(sigma)
        val = z(t) if isinstance(z, FourierVector) else z
        val = complex(np.asarray(val))
        if not np.isfinite(val):
            raise FloatingPointError(f"non-finite Zak data at sigma={sigma}")
        return np.exp(-1j * sigma * t) * val

    s0 = 1j * beta
    left = integrand(s0)
    right = integrand(s0 + omega)
    if abs(left - right) > check_tol * max(1.0, abs(left)):
        raise ValueError(
            f"quasi-periodicity violated: {left} vs {right} at sigma={s0} and sigma+omega"
        )
    total = left
    for j in range(1, n_sigma):
        total += integrand(s0 + omega * j / n_sigma)
    return total / n_sigma


def zak_forward(
    h: TimeSeries,
    sigma: complex,
    omega: float,
    n_f: int,
    tol: float = 1e-12,
    sqrt_start: int = 0,
) -> FourierVector:
    r"""Fourier coefficients of Z[h](sigma, .) for modes -n_f..n_f.

    Computed on the Poisson side: coefficient n is
    (omega/2pi) \int_0^{t_end} e^{i(sigma + n omega) t} h(t) dt with h replaced by
    its cubic spline and each cubic piece integrated exactly, so the jump that
    Z[h] always has at t = 0 does not alias into the coefficients. The
    truncation at t_end must satisfy |h| e^{-Im sigma t_end} < tol.

    Solutions of Abel-type equations start like a power series in sqrt(t),
    which a cubic spline resolves only to O(dt^{3/2}). ``sqrt_start = K``
    fits h ~ sum_{k<K} a_k t^{k/2} e^{-t} to the first samples, transforms that
    part exactly (Gamma(k/2 + 1) / (1 - i kappa)^{k/2 + 1}) and splines only
    the smoother remainder.
    """
    sigma = complex(sigma)
    if sigma.imag <= 0:
        raise ValueError("zak transform needs Im sigma > 0; continue analytically instead")
    if h.t0 != 0.0:
        raise ValueError("series must start at t = 0")
    need = _required_length(h, sigma, tol)
    if h.t_end < need:
        raise CoverageError(need, h.t_end)
    values = h.values
    n = np.arange(-n_f, n_f + 1)
    kappa = sigma + n * omega
    exact = np.zeros(n.size, dtype=complex)
    if sqrt_start:
        start, exact = _sqrt_start_part(h, kappa, sqrt_start)
        values = values - start
    spline = CubicSpline(h.times, values)
    c = spline.c  # shape (4, pieces): c[0] (x-x0)^3 + ... + c[3]
    x0 = spline.x[:-1]
    dt = np.diff(spline.x)
    out = np.empty(n.size, dtype=complex)
    for i, k in enumerate(kappa):
        z = 1j * k * dt
        mom = exp_moments(z, 3)  # int_0^1 x^m e^{z x} dx
        # int_0^dt tau^m e^{i k tau} dtau = dt^{m+1} M_m
        pieces = (
            c[3] * dt * mom[:, 0]
            + c[2] * dt**2 * mom[:, 1]
            + c[1] * dt**3 * mom[:, 2]
            + c[0] * dt**4 * mom[:, 3]
        )
        out[i] = np.sum(np.exp(1j * k * x0) * pieces)
    return FourierVector((out + exact) * omega / (2.0 * np.pi), omega)


def _sqrt_start_part(h: TimeSeries, kappa: np.ndarray, K: int):
    """Least-squares sqrt(t) expansion of the first samples and its exact transform."""
    m = min(h.values.size, 3 * K + 2)
    t = h.times
    k = np.arange(K) / 2.0
    basis = lambda tt: tt[:, None] ** k[None, :] * np.exp(-tt)[:, None]  # noqa: E731
    a, *_ = np.linalg.lstsq(basis(t[:m]), h.values[:m], rcond=None)
    start = basis(t) @ a
    lap = gamma_fn(k[None, :] + 1.0) / (1.0 - 1j * kappa[:, None]) ** (k[None, :] + 1.0)
    return start, lap @ a
