"""Poles of (1 - K(sigma))^{-1}: search, refinement, residues and sweeps.

A pole sigma_k is a point where K(sigma) has eigenvalue 1. Newton iteration
acts on the eigenvalue of K nearest to 1, which stays well scaled at any
truncation where a determinant would underflow. The residue of the resolvent
at a simple pole is v w^* / (w^* M'(sigma_k) v) with M = 1 - K and v, w the right
and left null vectors; it gives the resonant part of Y(t),

    Y_res(t) = alpha e^{-i sigma_k t} v(t),
    alpha = (-2 pi i / omega) (w^* y0(sigma_k)) / (w^* M'(sigma_k) v),

obtained by pushing the inversion contour of the Zak transform below the pole.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .field import FieldSpec, GaugeFunctions, derive_gauge
from .operator import Numerics, OperatorMatrix, build_K
from .zak import FourierVector


class PoleSearchError(RuntimeError):
    """Newton iteration did not converge; ``trace`` holds the iterates."""

    def __init__(self, message: str, trace: list[complex]):
        self.trace = trace
        super().__init__(f"{message}; last iterates {trace[-3:]}")


class BranchPointOutcome(PoleSearchError):
    """The iterate collapsed onto a threshold sigma + n omega = 0."""


class JordanChainUnsupported(NotImplementedError):
    """Residue extraction is implemented for simple poles only."""


@dataclass(frozen=True)
class ResonanceResult:
    sigma_k: complex
    order: int
    pi_right: FourierVector
    pi_left: FourierVector
    norm_deriv: complex
    residual: float
    iterations: int
    alpha: complex | None = None

    @property
    def gamma_k(self) -> float:
        """Amplitude decay rate -Im sigma_k."""
        return float(-self.sigma_k.imag)


@dataclass(frozen=True)
class StripScan:
    """Smallest singular value of 1 - K on a rectangular sigma grid."""

    re: np.ndarray
    im: np.ndarray
    values: np.ndarray  # shape (im.size, re.size); NaN where assembly failed
    candidates: tuple[complex, ...] = field(default=())

    @property
    def failed(self) -> np.ndarray:
        return ~np.isfinite(self.values)


Builder = Callable[..., OperatorMatrix]


def _smallest_sv(sigma: complex, g: GaugeFunctions, num: Numerics, builder: Builder = build_K) -> float:
    M = builder(sigma, g, num).one_minus()
    return float(np.linalg.svd(M, compute_uv=False)[-1])


def _safe_sv(args) -> float:
    sigma, g, num, builder = args
    try:
        return _smallest_sv(sigma, g, num, builder)
    except (ValueError, FloatingPointError, np.linalg.LinAlgError):
        return float("nan")


def scan_strip(
    g: GaugeFunctions,
    region: tuple[float, float, float, float] | None = None,
    resolution: tuple[int, int] = (24, 16),
    num: Numerics = Numerics(),
    threshold: float = 0.05,
    refine: bool = True,
    workers: int = 1,
    builder: Builder = build_K,
) -> StripScan:
    """Map the smallest singular value of 1 - K over ``region`` = (re_lo, re_hi, im_lo, im_hi).

    The default region is Re sigma in [0.05 omega, 0.95 omega] and
    Im sigma in [-3 omega, 0.2 omega]. Local grid minima below ``threshold``
    are pole candidates; with ``refine`` they are polished by :func:`find_pole`
    and duplicates merged.
    """
    om = g.omega
    if region is None:
        region = (0.05 * om, 0.95 * om, -3.0 * om, 0.2 * om)
    re = np.linspace(region[0], region[1], resolution[0])
    im = np.linspace(region[2], region[3], resolution[1])
    pts = [(complex(a, b), g, num, builder) for b in im for a in re]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            flat = list(ex.map(_safe_sv, pts))
    else:
        flat = [_safe_sv(p) for p in pts]
    vals = np.array(flat).reshape(im.size, re.size)
    cands: list[complex] = []
    padded = np.pad(np.where(np.isfinite(vals), vals, np.inf), 1, constant_values=np.inf)
    for i in range(im.size):
        for j in range(re.size):
            v = padded[i + 1, j + 1]
            if not v < threshold:
                continue
            nb = padded[i : i + 3, j : j + 3]
            if v <= nb.min():
                cands.append(complex(re[j], im[i]))
    if refine:
        found: list[complex] = []
        for c in cands:
            try:
                s = find_pole(g, c, num=num, builder=builder).sigma_k
            except PoleSearchError:
                continue
            if all(abs(s - f) > 1e-6 for f in found):
                found.append(s)
        cands = found
    return StripScan(re, im, vals, tuple(cands))


def _eig_near_one(K: np.ndarray, ref: complex = 1.0) -> complex:
    ev = np.linalg.eigvals(K)
    return complex(ev[np.argmin(np.abs(ev - ref))])


def _null_vectors(M: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    u, s, vh = np.linalg.svd(M)
    return vh[-1].conj(), u[:, -1], float(s[-1])


def find_pole(
    g: GaugeFunctions,
    guess: complex,
    tol: float = 1e-11,
    num: Numerics = Numerics(),
    max_iter: int = 30,
    step: float = 1e-5,
    im_tol: float = 1e-8,
    builder: Builder = build_K,
) -> ResonanceResult:
    """Newton iteration on mu(sigma) = 1, mu the eigenvalue of K(sigma) nearest 1.

    d mu / d sigma is a central difference (K is analytic in sigma). At the
    converged point the right/left null vectors of 1 - K come from the SVD,
    and the simple-pole normalization w^* M' v uses the same difference
    quotient of K.
    """
    om = g.omega
    sigma = complex(guess)
    trace = [sigma]
    mu = None
    for it in range(1, max_iter + 1):
        _check_threshold(sigma, om, trace)
        mu = _eig_near_one(builder(sigma, g, num).entries)
        mp = _eig_near_one(builder(sigma + step, g, num).entries, mu)
        mm = _eig_near_one(builder(sigma - step, g, num).entries, mu)
        dmu = (mp - mm) / (2.0 * step)
        if dmu == 0:
            raise PoleSearchError("flat eigenvalue", trace)
        delta = (mu - 1.0) / dmu
        # keep steps inside a fraction of the strip
        cap = 0.25 * om
        if abs(delta) > cap:
            delta *= cap / abs(delta)
        sigma = sigma - delta
        trace.append(sigma)
        if abs(delta) < tol * max(1.0, abs(sigma)):
            break
    else:
        raise PoleSearchError(f"no convergence in {max_iter} iterations", trace)
    _check_threshold(sigma, om, trace)
    # snap negligible imaginary parts (an undriven pole sits on the real axis)
    if abs(sigma.imag) < 10 * tol:
        sigma = complex(sigma.real, 0.0)
    if sigma.imag > im_tol:
        raise PoleSearchError(f"candidate {sigma} lies above the real axis", trace)
    K0 = builder(sigma, g, num)
    M = K0.one_minus()
    v, w, smin = _null_vectors(M)
    dM = -(builder(sigma + step, g, num).entries - builder(sigma - step, g, num).entries) / (
        2.0 * step
    )
    norm_deriv = complex(w.conj() @ dM @ v)
    order = 1 if abs(norm_deriv) > 1e-10 else 2
    residual = float(np.linalg.norm(M @ v) / np.linalg.norm(v))
    return ResonanceResult(
        sigma_k=sigma,
        order=order,
        pi_right=FourierVector(v, om),
        pi_left=FourierVector(w, om),
        norm_deriv=norm_deriv,
        residual=residual,
        iterations=len(trace) - 1,
    )


def _check_threshold(sigma: complex, omega: float, trace: list[complex]) -> None:
    k = round(-sigma.real / omega)
    if abs(sigma + k * omega) < 1e-6:
        raise BranchPointOutcome(f"iterate reached the threshold at n={k}", trace)


def residue_weight(r: ResonanceResult, y0_at_pole: FourierVector) -> complex:
    """Weight alpha of the resonant term alpha e^{-i sigma_k t} pi_right(t) in Y(t)."""
    if r.order != 1:
        raise JordanChainUnsupported(f"pole of order {r.order}: Jordan chain amplitudes")
    w = r.pi_left.coeffs
    y = y0_at_pole.resized(r.pi_left.n_f).coeffs
    om = r.pi_right.omega
    return complex(-2j * np.pi / om * (w.conj() @ y) / r.norm_deriv)


def resonant_part(r: ResonanceResult, alpha: complex, t) -> np.ndarray:
    """alpha e^{-i sigma_k t} pi_right(t)."""
    t = np.asarray(t, dtype=float)
    return alpha * np.exp(-1j * r.sigma_k * t) * r.pi_right(t)


def undriven_pole(omega: float) -> float:
    """Real quasienergy of the bound state, -1 reduced into [0, omega)."""
    return float(np.mod(-1.0, omega))


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    sigma: complex
    gamma: float


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    slope: float | None
    error: str | None = None


def epsilon_sweep(
    spec: FieldSpec,
    eps_list,
    num: Numerics = Numerics(),
    guess: complex | None = None,
    builder: Builder = build_K,
) -> SweepResult:
    """Follow the pole from the undriven bound state through increasing epsilon.

    Each solve starts from the previous pole. The log-log slope of gamma
    against epsilon is fitted over rows with gamma > 0. On a lost track the
    partial table is returned with ``error`` set.
    """
    eps = np.asarray(eps_list, dtype=float)
    if np.any(np.diff(eps) <= 0):
        raise ValueError("eps_list must be increasing")
    sigma = complex(undriven_pole(spec.omega)) if guess is None else complex(guess)
    rows: list[SweepRow] = []
    err = None
    base = sigma0(spec) if guess is None else sigma
    for e in eps:
        g = derive_gauge(spec.with_epsilon(float(e)))
        if rows:
            # the shift from the undriven pole grows like epsilon^2
            sigma = base + (rows[-1].sigma - base) * (e / rows[-1].epsilon) ** 2
        try:
            r = find_pole(g, sigma, num=num, builder=builder)
        except PoleSearchError as exc:
            err = f"lost track at epsilon={e}: {exc}"
            break
        rows.append(SweepRow(float(e), r.sigma_k, r.gamma_k))
    slope = None
    good = [(r.epsilon, r.gamma) for r in rows if r.gamma > 0]
    if len(good) >= 2:
        x, y = np.log(np.array(good)).T
        slope = float(np.polyfit(x, y, 1)[0])
    return SweepResult(tuple(rows), slope, err)


def sigma0(spec: FieldSpec) -> complex:
    return complex(undriven_pole(spec.omega))


@dataclass(frozen=True)
class AxisScan:
    minimum: float
    location: float
    sigma: np.ndarray
    values: np.ndarray


def real_axis_scan(
    g: GaugeFunctions,
    n_points: int = 48,
    delta: float | None = None,
    num: Numerics = Numerics(),
    builder: Builder = build_K,
) -> AxisScan:
    """Smallest singular value of 1 - K(sigma) for real sigma in (delta, omega - delta).

    The coarse grid minimum is polished by bounded scalar minimization. A
    strictly positive minimum is evidence that no real pole (Floquet bound
    state) exists.
    """
    om = g.omega
    if delta is None:
        delta = 0.02 * om
    s = np.linspace(delta, om - delta, n_points)
    vals = np.array([_smallest_sv(complex(x), g, num, builder) for x in s])
    j = int(np.argmin(vals))
    lo, hi = s[max(j - 1, 0)], s[min(j + 1, n_points - 1)]
    res = minimize_scalar(
        lambda x: _smallest_sv(complex(x), g, num, builder),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-10},
    )
    if res.fun < vals[j]:
        return AxisScan(float(res.fun), float(res.x), s, vals)
    return AxisScan(float(vals[j]), float(s[j]), s, vals)
