"""Small quadrature and special-function helpers shared by the numerical modules."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import gamma as gamma_fn


@lru_cache(maxsize=64)
def _gl(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = _gl(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def composite_gl(edges, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre with ``n`` points on each panel between consecutive edges."""
    edges = np.asarray(edges, dtype=float)
    x, w = _gl(n)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    return (lo + half * (x + 1.0)).ravel(), (half * w).ravel()


def sqrt_quadrature(T: float, panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for integrals over s in (0, T] with s = u^2.

    The substitution removes a s^{-1/2} or s^{1/2} endpoint behaviour; the
    Jacobian 2u is folded into the weights.
    """
    u, wu = composite_gl(np.linspace(0.0, np.sqrt(T), panels + 1), order)
    return u * u, 2.0 * u * wu


def exp_moments(z: np.ndarray, kmax: int) -> np.ndarray:
    """M_k(z) = int_0^1 x^k e^{z x} dx for k = 0..kmax, stable for all z.

    Returns an array of shape ``z.shape + (kmax + 1,)``. Small |z| uses the
    Taylor series; otherwise the upward recurrence M_k = (e^z - k M_{k-1})/z,
    which is stable once |z| exceeds kmax.
    """
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape + (kmax + 1,), dtype=complex)
    small = np.abs(z) < max(2.0, kmax + 1.0)
    if np.any(small):
        zs = z[small]
        term = np.ones_like(zs)
        acc = np.zeros(zs.shape + (kmax + 1,), dtype=complex)
        k = np.arange(kmax + 1)
        for m in range(60):
            acc += term[..., None] / (k + m + 1)
            term = term * zs / (m + 1)
        out[small] = acc
    big = ~small
    if np.any(big):
        zb = z[big]
        ez = np.exp(zb)
        m = (ez - 1.0) / zb
        cols = [m]
        for k in range(1, kmax + 1):
            m = (ez - k * m) / zb
            cols.append(m)
        out[big] = np.stack(cols, axis=-1)
    return out


def lerch_tail(sigma: complex, tau0: np.ndarray, T: float, powers) -> np.ndarray:
    """Sum_{k>=0} e^{i sigma (tau0 + kT)} (tau0 + kT)^{-p} for each p in ``powers``.

    Valid for Im sigma >= 0 and tau0 > 0, including sigma on the real axis
    (where the sum converges only through the algebraic decay). Evaluated from
    the Laplace representation tau^{-p} = Gamma(p)^{-1} int x^{p-1} e^{-tau x} dx,
    which turns the geometric sum over k into a closed form; x = u^2 and
    geometric panels near u = 0 resolve the near-singular denominator when
    e^{i sigma T} is close to 1.
    """
    tau0 = np.asarray(tau0, dtype=float)
    u_max = np.sqrt(45.0 / tau0.min())
    edges = np.concatenate(([0.0], u_max * np.geomspace(1e-4, 1.0, 9)))
    u, w = composite_gl(edges, 24)
    x = u * u
    z = 1j * sigma - x
    denom = -np.expm1(z * T)
    base = np.exp(np.multiply.outer(tau0, z)) / denom
    out = []
    for p in powers:
        jac = 2.0 * u ** (2 * p - 1) * w / gamma_fn(p)
        out.append(base @ jac)
    return np.stack(out, axis=0)
