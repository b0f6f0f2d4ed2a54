r"""Zak-domain integral operator K(sigma) = K_F(sigma) + K_L(sigma) and y0(sigma).

The boundary value Y(t) = psi_v(c(t), t) obeys the Volterra equation

    Y(t) = Y0(t) + sqrt(i/pi) \int_0^t F(t, s) Y(t - s) ds / sqrt(s),
    F(t, s) = exp(i (c(t) - c(t - s))^2 / 4s),

and its Zak transform y(sigma, t) obeys y = y0 + K(sigma) y. Splitting F = 1 + (F - 1)
gives the diagonal part

    K_F e_n = i / sqrt_cut(sigma + n omega) e_n,     e_n = e^{-i n omega t},

and a field-dependent part (K_L f)(t) = \int_0^T k(t, s) f(t - s) ds with

    k(t, s) = sqrt(i/pi) sum_{k >= 0} [e^{i A/tau_k} - 1] e^{i sigma tau_k} / sqrt(tau_k),
    A = (c(t) - c(t - s))^2 / 4,  tau_k = s + k T,  T = 2 pi / omega.

The sum converges for Im sigma >= 0. Below the real axis the kernel is
continued by a contour integral (see :func:`kl_kernel_contour`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .field import GaugeFunctions, eval_field
from .quadrature import composite_gl, gauss_legendre, lerch_tail, sqrt_quadrature
from .states import InitialState
from .zak import FourierVector, fourier_matrix_from_samples

SQRT_I_OVER_PI = np.sqrt(1j / np.pi)
_E_I_PI_4 = np.exp(0.25j * np.pi)

__all__ = [
    "BranchPointError",
    "BranchSqrt",
    "NearPoleError",
    "OperatorMatrix",
    "Numerics",
    "InitialState",
    "sqrt_cut",
    "branch_sqrt",
    "kf_diag",
    "kl_kernel_sum",
    "kl_kernel_contour",
    "build_K",
    "build_y0",
    "solve_y",
]


class BranchPointError(ValueError):
    """An argument sits on (or too close to) a branch point sigma + n omega = 0."""

    def __init__(self, n: int, value: complex):
        self.n = n
        super().__init__(f"sigma + n omega = {value:.3g} for n = {n}: branch point")


class NearPoleError(np.linalg.LinAlgError):
    """1 - K(sigma) is numerically singular."""

    def __init__(self, sigma: complex, smallest_singular_value: float):
        self.sigma = sigma
        self.smallest_singular_value = smallest_singular_value
        super().__init__(
            f"1 - K is near-singular at sigma={sigma}: smallest singular value "
            f"{smallest_singular_value:.3e}"
        )


# ---------------------------------------------------------------- branch root


@dataclass(frozen=True)
class BranchSqrt:
    value: complex
    at_branch_point: bool = False


def sqrt_cut(z):
    """Square root with its cut on the negative imaginary axis.

    sqrt_cut(z) = e^{i pi/4} sqrt(-i z) with the principal root, so positive
    reals map to positive reals and sqrt_cut(-1) = i (continuation from the
    upper half plane). On the cut itself the limit from Re z > 0 is used.
    sqrt_cut(0) = 0.
    """
    w = -1j * np.asarray(z, dtype=complex)
    out = _E_I_PI_4 * np.sqrt(w)
    # on the cut w is a negative real; take the side reached from Re z > 0
    on_cut = (w.imag == 0) & (w.real < 0)
    if np.any(on_cut):
        out = np.where(on_cut, _E_I_PI_4 * -1j * np.sqrt(np.abs(w.real)), out)
    return out if out.ndim else complex(out)


def branch_sqrt(z: complex) -> BranchSqrt:
    z = complex(z)
    return BranchSqrt(sqrt_cut(z), z == 0)


def kf_diag(sigma: complex, n, omega: float):
    """Diagonal entries i / sqrt_cut(sigma + n omega) of K_F."""
    z = complex(sigma) + np.asarray(n) * omega
    if np.any(z == 0):
        bad = int(np.atleast_1d(n)[np.atleast_1d(z) == 0][0])
        raise BranchPointError(bad, 0j)
    return 1j / sqrt_cut(z)


# ---------------------------------------------------------------- kernels


def _a_of(g: GaugeFunctions, t, s) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    d = eval_field(g, "c", t) - eval_field(g, "c", t - s)
    return 0.25 * d * d


def _first_period_term(sigma: complex, A: np.ndarray, s: np.ndarray) -> np.ndarray:
    """sqrt(i/pi) e^{i sigma s} (e^{iA/s} - 1) / sqrt(s), the k = 0 term."""
    return SQRT_I_OVER_PI * np.exp(1j * sigma * s) * np.expm1(1j * A / s) / np.sqrt(s)


def _series_order(ratio: float, tol: float = 1e-17) -> int:
    """Smallest J with ratio^J / J! below tol (terms of an exponential series)."""
    term, j = 1.0, 0
    while True:
        j += 1
        term *= ratio / j
        if term < tol or j > 80:
            return j


def _check_strip(sigma: complex, omega: float, margin: float) -> tuple[complex, int]:
    """Shift sigma by a multiple of omega into (margin, omega - margin)."""
    shift = math.floor(sigma.real / omega)
    base = sigma - shift * omega
    if not (margin < base.real < omega - margin):
        raise ValueError(
            f"Re sigma = {sigma.real:.6g} lies within {margin:.3g} of the lattice "
            f"n*omega; the contour form needs an interior real part. Recenter with "
            f"Z(sigma + omega, t) = e^(i omega t) Z(sigma, t) or use Im sigma > 0"
        )
    return base, shift


def kl_kernel_sum(
    sigma: complex,
    t,
    s,
    g: GaugeFunctions,
    k_max: int = 16,
    A: np.ndarray | None = None,
) -> np.ndarray:
    """K_L kernel from the sum over periods (Im sigma >= 0).

    Terms k < k_max are summed directly. The remainder is expanded in powers
    of A / tau_k (exact series) and each power summed in closed form with
    :func:`lerch_tail`, which is valid on the real axis as well.
    """
    sigma = complex(sigma)
    if sigma.imag < 0:
        raise ValueError("the period sum diverges for Im sigma < 0; use kl_kernel_contour")
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    if A is None:
        A = _a_of(g, t, s)
    A = np.broadcast_to(A, s.shape)
    T = g.period
    if np.any((s <= 0) | (s > T * (1 + 1e-12))):
        raise ValueError("s must lie in (0, 2 pi/omega]")
    out = _first_period_term(sigma, A, s)
    for k in range(1, k_max):
        tau = s + k * T
        out = out + SQRT_I_OVER_PI * np.exp(1j * sigma * tau) * np.expm1(1j * A / tau) / np.sqrt(tau)
    amax = float(np.max(np.abs(A))) if A.size else 0.0
    if amax > 0:
        J = _series_order(amax / (k_max * T))
        s_flat = np.unique(s.ravel())
        tails = lerch_tail(sigma, s_flat + k_max * T, T, [j + 0.5 for j in range(1, J + 1)])
        idx = np.searchsorted(s_flat, s)
        tail = np.zeros(s.shape, dtype=complex)
        for j in range(J, 0, -1):
            tail = tail + (1j * A) ** j / math.factorial(j) * tails[j - 1][idx]
        out = out + SQRT_I_OVER_PI * tail
    return out


@dataclass(frozen=True)
class ContourQuad:
    """Gauss-Legendre orders for the continuation contour.

    ``arc`` points on the half circle; rays are cut into panels of
    ``ray_order`` points whose length follows the decay and oscillation rates.
    """

    arc: int = 64
    ray_order: int = 32
    tol: float = 1e-13
    margin_frac: float = 0.05


def _contour_nodes(sigma: complex, omega: float, s: float, quad: ContourQuad):
    """Nodes p and weights dp on gamma = (-P, -R] + upper half circle + [R, P)."""
    T = 2.0 * np.pi / omega
    R = s + 0.5 * T  # halfway between the k = 0 and k = 1 poles
    kl, kr = sigma.real, omega - sigma.real
    osc = max(abs(sigma.imag), 1e-3)

    def ray(rate: float) -> tuple[np.ndarray, np.ndarray]:
        length = math.log(1.0 / quad.tol) / rate + 8.0 / rate
        panel = min(3.0 / rate, 4.0 * math.pi / osc, 2.0 * T)
        n = max(1, int(math.ceil(length / panel)))
        return composite_gl(R + np.linspace(0.0, length, n + 1), quad.ray_order)

    xr, wr = ray(kr)
    xl, wl = ray(kl)
    th, wt = gauss_legendre(quad.arc, math.pi, 0.0)
    pc = R * np.exp(1j * th)
    p = np.concatenate([-xl[::-1], pc, xr])
    dp = np.concatenate([wl[::-1], 1j * pc * wt, wr]).astype(complex)
    return p, dp


def _contour_core(sigma: complex, omega: float, p: np.ndarray, s: float) -> np.ndarray:
    """sqrt(i/pi) e^{sigma p} / (1 - e^{omega (p - i s)}) / sqrt(-i p), overflow-safe."""
    z = omega * (p - 1j * s)
    right = p.real > 0
    out = np.empty(p.shape, dtype=complex)
    # left/arc: plain form
    out[~right] = np.exp(sigma * p[~right]) / (-np.expm1(z[~right]))
    # right: e^{sigma p}/(1 - e^z) = -e^{sigma p - z}/(1 - e^{-z})
    out[right] = -np.exp(sigma * p[right] - z[right]) / (-np.expm1(-z[right]))
    return SQRT_I_OVER_PI * out / np.sqrt(-1j * p)


def kl_kernel_contour(
    sigma: complex,
    t,
    s,
    g: GaugeFunctions,
    quad: ContourQuad = ContourQuad(),
    A: np.ndarray | None = None,
) -> np.ndarray:
    r"""K_L kernel continued to any Im sigma by a contour integral.

    With p = i tau the terms of the period sum are residues of

        H(p) Q(p),  H(p) = sqrt(i/pi) e^{sigma p} (e^{-A/p} - 1) / sqrt(-i p),
                    Q(p) = 1 / (1 - e^{omega (p - i s)}),

    at the poles p_k = i (s + k T), each with residue -H(p_k)/omega. Closing the
    contour gamma (real axis detoured over a half circle of radius R) in the
    upper half plane picks up every k >= 1 pole for Im sigma > 0, so

        k(t, s) = sqrt(i/pi) e^{i sigma s}(e^{iA/s} - 1)/sqrt(s) - (omega / 2 pi i) \int_gamma H Q dp.

    The right side is analytic for 0 < Re sigma < omega and any Im sigma, which
    gives the continuation. R = s + T/2 keeps the nearest poles a half period
    away from the arc. e^{-A/p} - 1 is expanded in powers of A/p when A is small
    compared with R, which separates the (t, s) dependence.
    """
    sigma = complex(sigma)
    omega = g.omega
    T = g.period
    base, shift = _check_strip(sigma, omega, quad.margin_frac * omega)
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    if A is None:
        A = _a_of(g, t, s)
    A = np.broadcast_to(A, s.shape)
    if np.any((s <= 0) | (s > T * (1 + 1e-12))):
        raise ValueError("s must lie in (0, 2 pi/omega]")

    out = _first_period_term(base, A, s)
    s_flat, inv = np.unique(s.ravel(), return_inverse=True)
    inv = inv.reshape(s.shape)
    amax = float(np.max(np.abs(A))) if A.size else 0.0
    ratio = amax / (0.5 * T)
    pref = -omega / (2j * np.pi)
    if ratio < 0.5:
        J = _series_order(ratio)
        I = np.empty((J, s_flat.size), dtype=complex)
        for i, sv in enumerate(s_flat):
            p, dp = _contour_nodes(base, omega, sv, quad)
            core = _contour_core(base, omega, p, sv) * dp
            pj = np.ones_like(p)
            for j in range(J):
                pj = pj * (-1.0 / p)
                I[j, i] = np.sum(core * pj)
        acc = np.zeros(s.shape, dtype=complex)
        for j in range(J, 0, -1):
            acc = acc + A**j / math.factorial(j) * I[j - 1][inv]
        out = out + pref * acc
    else:
        acc = np.empty(s.shape, dtype=complex)
        for i, sv in enumerate(s_flat):
            p, dp = _contour_nodes(base, omega, sv, quad)
            core = _contour_core(base, omega, p, sv) * dp
            sel = inv == i
            Av = A[sel]
            acc[sel] = np.expm1(-np.divide.outer(Av, p)) @ core
        out = out + pref * acc
    if shift:
        # k_{sigma + m omega}(t, s) = e^{i m omega s} k_sigma(t, s)
        out = out * np.exp(1j * shift * omega * s)
    return out


# ---------------------------------------------------------------- matrices


@dataclass(frozen=True)
class Numerics:
    """Discretization parameters for operator assembly."""

    n_f: int = 32
    t_grid: int = 256
    s_panels: int = 12
    s_order: int = 32
    k_max: int = 16
    contour: ContourQuad = field(default_factory=ContourQuad)
    y_extra: int = 16

    def __post_init__(self) -> None:
        if self.t_grid < 4 * self.n_f + 2:
            raise ValueError("t_grid must resolve mode differences up to 2 n_f")

    def key(self) -> tuple:
        c = self.contour
        return (
            self.n_f,
            self.t_grid,
            self.s_panels,
            self.s_order,
            self.k_max,
            c.arc,
            c.ray_order,
            c.tol,
            c.margin_frac,
        )

    def with_n_f(self, n_f: int) -> Numerics:
        from dataclasses import replace

        return replace(self, n_f=n_f, t_grid=max(self.t_grid, 8 * n_f))


@dataclass(frozen=True)
class OperatorMatrix:
    """Truncated matrix of K(sigma) in the basis e^{-i n omega t}, |n| <= n_f.

    Entry (n, m) is the e^{-i n omega t} component of K applied to e^{-i m omega t}.
    """

    sigma: complex
    n_f: int
    omega: float
    epsilon: float
    entries: np.ndarray
    quad_meta: dict

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.n_f, self.n_f + 1)

    def one_minus(self) -> np.ndarray:
        return np.eye(self.entries.shape[0]) - self.entries

    def to_bytes(self) -> bytes:
        """Binary export: little-endian header then row-major complex128 entries.

        Header: sigma.real, sigma.imag, omega, epsilon as float64; then int32
        n_f, t_grid, s_panels, s_order, k_max, contour arc, contour ray order.
        """
        m = self.quad_meta
        head = np.array(
            [self.sigma.real, self.sigma.imag, self.omega, self.epsilon], dtype="<f8"
        ).tobytes()
        ints = np.array(
            [
                self.n_f,
                m.get("t_grid", 0),
                m.get("s_panels", 0),
                m.get("s_order", 0),
                m.get("k_max", 0),
                m.get("arc", 0),
                m.get("ray_order", 0),
            ],
            dtype="<i4",
        ).tobytes()
        body = np.ascontiguousarray(self.entries, dtype="<c16").tobytes()
        return head + ints + body

    @classmethod
    def from_bytes(cls, data: bytes) -> OperatorMatrix:
        head = np.frombuffer(data[:32], dtype="<f8")
        ints = np.frombuffer(data[32:60], dtype="<i4")
        n_f = int(ints[0])
        M = 2 * n_f + 1
        entries = np.frombuffer(data[60:], dtype="<c16").reshape(M, M).copy()
        keys = ("t_grid", "s_panels", "s_order", "k_max", "arc", "ray_order")
        meta = {k: int(v) for k, v in zip(keys, ints[1:])}
        return cls(complex(head[0], head[1]), n_f, float(head[2]), float(head[3]), entries, meta)


def choose_form(sigma: complex, omega: float, margin_frac: float) -> str:
    """Sum form on and above the real axis, contour form below it."""
    if sigma.imag >= 0:
        return "sum"
    return "contour"


def build_K(
    sigma: complex,
    g: GaugeFunctions,
    num: Numerics = Numerics(),
    form: str = "auto",
) -> OperatorMatrix:
    """Assemble K(sigma) = K_F + K_L on modes -n_f..n_f.

    K_L is discretized as (K_L f)(t) = \\int_0^T k(t, s) f(t - s) ds with s = u^2
    Gauss-Legendre panels in u, then projected onto Fourier modes by FFT over
    the t grid.
    """
    sigma = complex(sigma)
    n = np.arange(-num.n_f, num.n_f + 1)
    K = np.diag(kf_diag(sigma, n, g.omega)).astype(complex)
    meta = {
        "t_grid": num.t_grid,
        "s_panels": num.s_panels,
        "s_order": num.s_order,
        "k_max": num.k_max,
        "arc": num.contour.arc,
        "ray_order": num.contour.ray_order,
        "form": "diagonal",
    }
    if not g.is_zero:
        if form == "auto":
            form = choose_form(sigma, g.omega, num.contour.margin_frac)
        K = K + _kl_matrix(sigma, g, num, form)
        meta["form"] = form
    return OperatorMatrix(sigma, num.n_f, g.omega, g.epsilon, K, meta)


def _kernel_grid(sigma: complex, g: GaugeFunctions, num: Numerics, form: str):
    T = g.period
    t = T * np.arange(num.t_grid) / num.t_grid
    s, w = sqrt_quadrature(T, num.s_panels, num.s_order)
    A = _a_of(g, t[:, None], s[None, :])
    tt, ss = np.broadcast_arrays(t[:, None], s[None, :])
    if form == "sum":
        k = kl_kernel_sum(sigma, tt, ss, g, num.k_max, A=A)
    elif form == "contour":
        k = kl_kernel_contour(sigma, tt, ss, g, num.contour, A=A)
    else:
        raise ValueError(f"unknown kernel form {form!r}")
    return t, s, w, k


def _kl_matrix(sigma: complex, g: GaugeFunctions, num: Numerics, form: str) -> np.ndarray:
    t, s, w, k = _kernel_grid(sigma, g, num, form)
    n = np.arange(-num.n_f, num.n_f + 1)
    # (K_L e_m)(t) = e^{-i m omega t} B_m(t),  B_m(t) = sum_q w_q k(t, s_q) e^{i m omega s_q}
    B = (k * w) @ np.exp(1j * g.omega * np.multiply.outer(s, n))
    coef = fourier_matrix_from_samples(B, 2 * num.n_f)  # modes -2n_f..2n_f, per column m
    M = n.size
    rows = n[:, None] - n[None, :] + 2 * num.n_f
    return coef[rows, np.arange(M)[None, :]]


# ---------------------------------------------------------------- y0 and y


def build_y0(
    sigma: complex,
    psi0: InitialState,
    g: GaugeFunctions,
    num: Numerics = Numerics(),
    min_dist: float = 1e-12,
) -> FourierVector:
    r"""Fourier data of the Zak transform of Y0(t) = (e^{i d^2 t} psi0)(c(t)).

    Poisson summation in t and the free resolvent give

        y0(sigma, t) = sum_n e^{-i n omega t} (2 T sqrt_cut(z_n))^{-1}
                        \int e^{i sqrt_cut(z_n) |c(t) - y|} psi0(y) dy,
        z_n = sigma + n omega,  T = 2 pi / omega.

    The n = 0 term carries the sigma^{-1/2} singularity
    (2 T sqrt(sigma))^{-1} \int psi0 at sigma -> 0. Each g_n(t) is sampled on
    the t grid and projected by FFT; modes n beyond n_f contribute through
    their t-dependence, so the sum runs over |n| <= n_f + y_extra.
    """
    coeffs, _ = _y0_parts(complex(sigma), psi0, g, num, min_dist, allow_branch=False)
    return FourierVector(coeffs, g.omega)


def _y0_parts(sigma, psi0, g, num, min_dist=1e-12, allow_branch=False):
    r"""y0 coefficients, plus the singular strength if some z_n is exactly 0.

    At z_j = 0 the j-th term is split as mass / (2 T r) + (i / 2T) \int |c - y| psi0
    + O(r); the finite part goes into the coefficients and ``mass / 2T`` is
    returned so the caller can take the scaled limit.
    """
    T = g.period
    n_f = num.n_f
    nn = np.arange(-n_f - num.y_extra, n_f + num.y_extra + 1)
    z = sigma + nn * g.omega
    exact = z == 0
    close = (np.abs(z) < min_dist) & ~(exact & allow_branch)
    if np.any(close):
        raise BranchPointError(int(nn[close][0]), complex(z[close][0]))
    r = sqrt_cut(z)
    t = T * np.arange(num.t_grid) / num.t_grid
    c = eval_field(g, "c", t)
    rr = np.where(exact, 1.0, r)
    integ = psi0.abs_kernel_integral(rr[None, :], c[:, None])
    gn = integ / (2.0 * T * rr[None, :])
    strength = None
    if np.any(exact):
        j = int(np.flatnonzero(exact)[0])
        lam = 1e-5
        first = (
            psi0.abs_kernel_integral(lam, c) - psi0.abs_kernel_integral(-lam, c)
        ) / (2j * lam)  # int |c - y| psi0 dy
        gn[:, j] = 1j * first / (2.0 * T)
        strength = psi0.mass() / (2.0 * T)
    P = 2 * n_f + num.y_extra
    ghat = fourier_matrix_from_samples(gn, P)
    out = np.zeros(2 * n_f + 1, dtype=complex)
    m = np.arange(-n_f, n_f + 1)
    for j, nv in enumerate(nn):
        p = m - nv
        ok = np.abs(p) <= P
        out[ok] += ghat[p[ok] + P, j]
    return out, strength


def _regularization(sigma: complex, n: np.ndarray, omega: float) -> np.ndarray:
    """Row scaling that keeps the near-branch-point row finite.

    Row n of (1 - K) y = y0 is multiplied by sqrt_cut(sigma + n omega)/i, i.e.
    divided by its K_F entry, for the single mode with |sigma + n omega| < omega/2.
    """
    z = sigma + n * omega
    scale = np.ones(n.size, dtype=complex)
    j = int(np.argmin(np.abs(z)))
    if abs(z[j]) < 0.5 * omega:
        scale[j] = sqrt_cut(z[j]) / 1j
    return scale


def scaled_system(sigma: complex, g: GaugeFunctions, psi0: InitialState, num: Numerics, K=None):
    r"""Row-regularized matrix and right side of (1 - K(sigma)) y = y0.

    The mode whose K_F entry blows up at the branch point sigma + n omega = 0 has
    its row divided by that entry (the explicit treatment of the projection
    onto that mode). Exactly at the branch point the limiting row, -e_n on the
    left and (2 T i)^{-1} \int psi0 on the right, is used.
    """
    sigma = complex(sigma)
    n = np.arange(-num.n_f, num.n_f + 1)
    z = sigma + n * g.omega
    at_branch = np.any(z == 0)
    if not at_branch:
        if K is None:
            K = build_K(sigma, g, num)
        y0 = build_y0(sigma, psi0, g, num)
        scale = _regularization(sigma, n, g.omega)
        return scale[:, None] * K.one_minus(), scale * y0.coeffs
    j = int(np.flatnonzero(z == 0)[0])
    diag = np.zeros(n.size, dtype=complex)
    ok = z != 0
    diag[ok] = kf_diag(sigma, n[ok], g.omega)
    Km = np.diag(diag)
    if not g.is_zero:
        Km = Km + _kl_matrix(sigma, g, num, "sum")
    M = np.eye(n.size) - Km
    M[j, :] = 0.0
    M[j, j] = -1.0
    rhs, strength = _y0_parts(sigma, psi0, g, num, allow_branch=True)
    rhs = rhs.copy()
    rhs[j] = strength / 1j
    return M, rhs


def solve_y(
    sigma: complex,
    g: GaugeFunctions,
    psi0: InitialState,
    num: Numerics = Numerics(),
    K: OperatorMatrix | None = None,
    cond_max: float = 1e12,
) -> FourierVector:
    """y = (1 - K(sigma))^{-1} y0 by a dense LU solve of the row-regularized system."""
    M, rhs = scaled_system(sigma, g, psi0, num, K)
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] < sv[0] / cond_max:
        raise NearPoleError(complex(sigma), float(sv[-1]))
    return FourierVector(np.linalg.solve(M, rhs), g.omega)
