"""Compactly supported initial data built from exponential pieces.

Every supported shape is a finite sum of terms coef * e^{i q x} restricted to an
interval [lo, hi] (q may be complex). That form gives closed expressions for
the mass, for integrals against e^{i lam |c - y|}, and for free Schrodinger
evolution through the complex error function.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import erfcx

from .quadrature import exp_moments

Kind = Literal["cosine_bump", "truncated_exponential"]

_E_MINUS_I_PI_4 = np.exp(-0.25j * np.pi)


@dataclass(frozen=True)
class Piece:
    coef: complex
    q: complex
    lo: float
    hi: float


def _segment_exp_integral(kappa, lo, hi):
    """int_lo^hi e^{i kappa y} dy, stable when kappa (hi - lo) is small."""
    kappa = np.asarray(kappa, dtype=complex)
    length = np.asarray(hi - lo, dtype=float)
    m0 = exp_moments(1j * kappa * length, 0)[..., 0]
    return np.exp(1j * kappa * lo) * length * m0


@dataclass(frozen=True)
class InitialState:
    """Initial wavefunction on [-L0, L0].

    ``cosine_bump``: A cos^2(pi x / 2 L0), C^1 and compactly supported.
    ``truncated_exponential``: A (e^{-|x|} - e^{|x| - 2 L0}), the undriven bound
    state tapered so it vanishes continuously at the edge (H^1).
    ``normalize`` scales A to unit L2 norm; otherwise A = 1.
    """

    kind: Kind = "cosine_bump"
    L0: float = 1.0
    normalize: bool = True

    def __post_init__(self) -> None:
        if self.kind not in ("cosine_bump", "truncated_exponential"):
            raise ValueError(f"unknown initial state kind {self.kind!r}")
        if not self.L0 > 0:
            raise ValueError("L0 must be positive")

    @property
    def support(self) -> tuple[float, float]:
        return (-self.L0, self.L0)

    def _raw_pieces(self) -> list[Piece]:
        L = self.L0
        if self.kind == "cosine_bump":
            k = np.pi / L
            return [Piece(0.5, 0.0, -L, L), Piece(0.25, k, -L, L), Piece(0.25, -k, -L, L)]
        e2 = np.exp(-2.0 * L)
        return [
            Piece(1.0, -1j, -L, 0.0),
            Piece(-e2, 1j, -L, 0.0),
            Piece(1.0, 1j, 0.0, L),
            Piece(-e2, -1j, 0.0, L),
        ]

    @property
    def amplitude(self) -> float:
        if not self.normalize:
            return 1.0
        raw = InitialState(self.kind, self.L0, normalize=False)
        return 1.0 / np.sqrt(raw.norm_squared())

    def pieces(self) -> list[Piece]:
        A = self.amplitude
        return [Piece(A * p.coef, p.q, p.lo, p.hi) for p in self._raw_pieces()]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        for p in self.pieces():
            inside = (x >= p.lo) & (x <= p.hi)
            out = out + np.where(inside, p.coef * np.exp(1j * p.q * x), 0.0)
        # pieces sharing an endpoint double count it; fix by averaging at x = 0
        if self.kind == "truncated_exponential":
            at0 = x == 0.0
            out = np.where(at0, out / 2.0, out)
        return out.real if self.kind == "cosine_bump" else out

    def mass(self) -> complex:
        """int psi0(y) dy."""
        return complex(sum(p.coef * _segment_exp_integral(p.q, p.lo, p.hi) for p in self.pieces()))

    def norm_squared(self) -> float:
        x = np.linspace(-self.L0, self.L0, 20001)
        v = np.abs(self(x)) ** 2
        # the shapes are smooth on each half; Simpson on a fine grid is exact enough
        from scipy.integrate import simpson

        return float(simpson(v, x=x))

    def abs_kernel_integral(self, lam, c) -> np.ndarray:
        """int e^{i lam |c - y|} psi0(y) dy for arrays lam and c (broadcast)."""
        lam = np.asarray(lam, dtype=complex)
        c = np.asarray(c, dtype=float)
        lam, c = np.broadcast_arrays(lam, c)
        out = np.zeros(lam.shape, dtype=complex)
        for p in self.pieces():
            left_hi = np.clip(c, p.lo, p.hi)
            # y < c: e^{i lam (c - y)} e^{i q y}
            out += p.coef * np.exp(1j * lam * c) * _segment_exp_integral(p.q - lam, p.lo, left_hi)
            # y > c: e^{i lam (y - c)} e^{i q y}
            out += p.coef * np.exp(-1j * lam * c) * _segment_exp_integral(p.q + lam, left_hi, p.hi)
        return out

    def free_evolve(self, x, t) -> np.ndarray:
        r"""Free evolution \int (4 pi i t)^{-1/2} e^{i (x-y)^2 / 4t} psi0(y) dy.

        Closed form per piece: e^{i q x - i q^2 t} (erf(w_hi) - erf(w_lo)) / 2 with
        w = e^{-i pi/4} (y - x + 2 t q) / (2 sqrt t); differences of erf are taken
        through scaled erfc on the side where they would cancel.
        """
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        x, t = np.broadcast_arrays(x, t)
        if np.any(t < 0):
            raise ValueError("free evolution is defined for t >= 0")
        out = np.zeros(x.shape, dtype=complex)
        pos = t > 0
        if np.any(~pos):
            out[~pos] = self(x[~pos])
        if not np.any(pos):
            return out
        xp, tp = x[pos], t[pos]
        acc = np.zeros(xp.shape, dtype=complex)
        st = 2.0 * np.sqrt(tp)
        for p in self.pieces():
            pre = 1j * p.q * xp - 1j * p.q * p.q * tp
            w_lo = _E_MINUS_I_PI_4 * (p.lo - xp + 2 * tp * p.q) / st
            w_hi = _E_MINUS_I_PI_4 * (p.hi - xp + 2 * tp * p.q) / st
            acc += p.coef * 0.5 * _erf_diff(w_hi, w_lo, pre)
        out[pos] = acc
        return out


def _erf_diff(wb: np.ndarray, wa: np.ndarray, pre: np.ndarray) -> np.ndarray:
    """e^{pre} (erf(wb) - erf(wa)) without overflow or cancellation."""
    wb, wa, pre = np.broadcast_arrays(wb, wa, pre)

    def erfc_scaled(w, m):
        # e^{pre} erfc(w) = erfcx(w) e^{pre - w^2}
        return erfcx(w) * np.exp(pre[m] - w * w)

    out = np.empty(wb.shape, dtype=complex)
    right = (wa.real >= 0) & (wb.real >= 0)
    left = (wa.real <= 0) & (wb.real <= 0) & ~right
    mid = ~(right | left)
    if np.any(right):
        m = right
        out[m] = erfc_scaled(wa[m], m) - erfc_scaled(wb[m], m)
    if np.any(left):
        # erf(w) = erfc(-w) - 1
        m = left
        out[m] = erfc_scaled(-wb[m], m) - erfc_scaled(-wa[m], m)
    if np.any(mid):
        # erf(wb) - erf(wa) = 2 - erfc(wb) - erfc(-wa)
        m = mid
        out[m] = 2.0 * np.exp(pre[m]) - erfc_scaled(wb[m], m) - erfc_scaled(-wa[m], m)
    return out


def free_evolve_quadrature(f, support, x, t, breaks=()) -> complex:
    r"""Direct quadrature of \int (4 pi i t)^{-1/2} e^{i (x-y)^2/4t} f(y) dy.

    Composite Gauss-Legendre whose panel count follows the phase variation
    across the support, so the oscillatory kernel stays resolved. ``breaks``
    lists interior points where f has a kink; panels are split there. Used as
    an independent check on the closed forms and for data given only as a
    callable.
    """
    from .quadrature import composite_gl

    lo, hi = support
    if t == 0:
        return complex(f(np.array([x]))[0])
    phase_span = max((x - lo) ** 2, (x - hi) ** 2) / (4.0 * t)
    # Phase derivative is |x-y|/2t; allow ~1 radian per panel node spacing
    max_rate = max(abs(x - lo), abs(x - hi)) / (2.0 * t)
    panels = int(np.clip(np.ceil(max_rate * (hi - lo) / 8.0) + 1, 1, 200000))
    panels = max(panels, int(np.ceil(phase_span / 64.0)) + 1)
    edges = np.linspace(lo, hi, panels + 1)
    inner = [b for b in breaks if lo < b < hi]
    if inner:
        edges = np.unique(np.concatenate([edges, inner]))
    y, w = composite_gl(edges, 16)
    kern = np.exp(1j * (x - y) ** 2 / (4.0 * t)) / np.sqrt(4j * np.pi * t)
    return complex(np.sum(w * kern * f(y)))
