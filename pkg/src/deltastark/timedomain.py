r"""Time-domain solution of the driven delta-well problem.

In the velocity frame the wavefunction at the moving well, Y(t) = psi_v(c(t), t),
solves the weakly singular Volterra equation

.. math::

    Y(t) = Y_0(t) + \sqrt{i/\pi} \int_0^t F(t, s) Y(t - s) s^{-1/2} ds,
    \qquad F(t, s) = e^{i (c(t) - c(t - s))^2 / 4 s},

with Y_0(t) the free evolution of psi0 evaluated at x = c(t). The solver
marches Y on a uniform grid by product integration: F(t, s) Y(t - s) is
interpolated linearly in s between grid points and integrated exactly against
s^{-1/2}. Because t - s stays on the grid, no off-grid interpolation of Y is
needed and the unknown Y(t_i) enters only through the s = 0 node.

Y itself starts like Y(0) + beta sqrt(t) with beta = 2 sqrt(i/pi) Y(0), and a
linear interpolant misses the sqrt(t) part by O(h^{3/2}) on every panel. The
solver adds that known interpolation defect back in closed form, which
restores second-order convergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.special import erfcx

from .field import FieldSpec, GaugeFunctions, derive_gauge, eval_field
from .states import InitialState
from .zak import TimeSeries

SQRT_I_OVER_PI = np.sqrt(1j / np.pi)


class StepSizeError(ValueError):
    """The implicit step is not solvable at the requested step size."""


class VolterraDivergence(FloatingPointError):
    """Non-finite values appeared while marching."""

    def __init__(self, last_good: int):
        self.last_good = last_good
        super().__init__(f"non-finite Y after index {last_good}")


def free_evolve_at(psi0: InitialState, x, t) -> np.ndarray:
    r"""\int (4 pi i t)^{-1/2} e^{i (x - y)^2 / 4t} psi0(y) dy.

    The datum is a sum of exponential pieces, so each piece integrates in
    closed form through the complex error function; this is exact for any
    phase variation across the support. t = 0 returns psi0(x).
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("free evolution is defined for t >= 0")
    return psi0.free_evolve(x, t)


def _product_weights(n: int, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Weights for \\int_0^{t_i} g(s) s^{-1/2} ds with g linear between nodes s_j = j h.

    Returns (inner, end): for i >= 1 the rule is
    inner[0] g_0 + sum_{0<j<i} inner[j] g_j + end[i] g_i.
    """
    j = np.arange(n + 1, dtype=float)
    sh = np.sqrt(h)
    I = 2.0 * sh * (np.sqrt(j + 1) - np.sqrt(j))  # int_{jh}^{(j+1)h} s^{-1/2} ds / 1
    J = (2.0 / 3.0) * sh * ((j + 1) ** 1.5 - j**1.5)  # int (s/h) s^{-1/2} ds over the panel
    # on panel j the hat functions are (j + 1 - s/h) and (s/h - j)
    left = (j + 1) * I - J  # weight of node j from panel j
    right = J - j * I  # weight of node j + 1 from panel j
    inner = np.empty(n + 1)
    inner[0] = left[0]
    inner[1:] = right[:-1] + left[1:]
    end = np.empty(n + 1)
    end[0] = 0.0
    end[1:] = right[:-1]
    return inner, end


def _sqrt_defect(n: int, h: float) -> np.ndarray:
    """\\int_{kh}^{(k+1)h} (sqrt(tau) - linear interpolant) dtau for k = 0..n-1."""
    k = np.arange(n, dtype=float)
    return h**1.5 * (
        (2.0 / 3.0) * ((k + 1) ** 1.5 - k**1.5) - 0.5 * (np.sqrt(k) + np.sqrt(k + 1))
    )


@dataclass(frozen=True)
class VolterraRun:
    """Solution of the closed equation for Y on t_i = i h, i = 0..N."""

    spec: FieldSpec
    psi0: InitialState
    t_end: float
    h: float
    Y: TimeSeries
    Y0: TimeSeries
    diagnostics: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.Y.times

    @property
    def gauge(self) -> GaugeFunctions:
        return derive_gauge(self.spec)


def volterra_solve(
    spec: FieldSpec,
    psi0: InitialState,
    t_end: float,
    h: float | None = None,
) -> VolterraRun:
    """March the Volterra equation for Y up to ``t_end`` with step ``h``.

    The default step is one 64th of the field period.
    """
    g = derive_gauge(spec)
    if h is None:
        h = g.period / 64.0
    if not (h > 0 and t_end > 0):
        raise ValueError("h and t_end must be positive")
    n = int(round(t_end / h))
    inner, end = _product_weights(n, h)
    diag = SQRT_I_OVER_PI * inner[0]
    if abs(diag) >= 1.0:
        raise StepSizeError(f"implicit weight {abs(diag):.3g} >= 1; reduce h below {h:.3g}")
    t = h * np.arange(n + 1)
    c = eval_field(g, "c", t)
    c_mid = eval_field(g, "c", t[:-1] + 0.5 * h)
    y0 = free_evolve_at(psi0, c, t)
    Y = np.empty(n + 1, dtype=complex)
    Y[0] = y0[0]
    s = h * np.arange(1, n + 1)
    defect = _sqrt_defect(n, h)
    beta = 2.0 * SQRT_I_OVER_PI * Y[0]
    denom = 1.0 - diag
    for i in range(1, n + 1):
        # F(t_i, s_j) Y(t_i - s_j), j = 1..i
        dc = c[i] - c[i - 1 :: -1]
        F = np.exp(1j * dc * dc / (4.0 * s[:i]))
        hist = F * Y[i - 1 :: -1]
        w = inner[1 : i + 1].copy()
        w[-1] = end[i]
        # sqrt-start defect on panels tau in [k h, (k+1) h], s = t_i - tau
        s_mid = t[i] - (np.arange(i) + 0.5) * h
        dm = c[i] - c_mid[:i]
        corr = np.dot(defect[:i], np.exp(1j * dm * dm / (4.0 * s_mid)) / np.sqrt(s_mid))
        Y[i] = (y0[i] + SQRT_I_OVER_PI * (np.dot(w, hist) + beta * corr)) / denom
        if not np.isfinite(Y[i]):
            raise VolterraDivergence(i - 1)
    diagnostics = {
        "implicit_weight": float(abs(diag)),
        "initial_defect": float(abs(Y[0] - psi0(np.array([c[0]]))[0])),
    }
    return VolterraRun(
        spec=spec,
        psi0=psi0,
        t_end=n * h,
        h=h,
        Y=TimeSeries(0.0, h, Y),
        Y0=TimeSeries(0.0, h, y0),
        diagnostics=diagnostics,
    )


def step_halving(
    spec: FieldSpec, psi0: InitialState, t_end: float, h: float, window: tuple[float, float] | None = None
) -> dict:
    """Observed order from runs at h, h/2 and h/4 compared on the coarse grid.

    Returns the two successive difference norms and log2 of their ratio.
    ``window`` restricts the comparison to a time interval.
    """
    t_end = int(round(t_end / h)) * h
    runs = [volterra_solve(spec, psi0, t_end, h / 2**k) for k in range(3)]
    coarse_t = runs[0].times
    sel = np.ones(coarse_t.size, dtype=bool)
    if window is not None:
        sel = (coarse_t >= window[0]) & (coarse_t <= window[1])
    ys = [r.Y.values[:: 2**k][: coarse_t.size][sel] for k, r in enumerate(runs)]
    d1 = float(np.max(np.abs(ys[0] - ys[1])))
    d2 = float(np.max(np.abs(ys[1] - ys[2])))
    return {"diff_h": d1, "diff_h2": d2, "order": float(np.log2(d1 / d2))}


# ---------------------------------------------------------------- reconstruction


def _m0(a: np.ndarray, tau: float) -> np.ndarray:
    r"""\int_0^tau e^{-a/s} s^{-1/2} ds for Re a >= 0, a != 0."""
    w = np.sqrt(a / tau)
    return np.exp(-a / tau) * (2.0 * np.sqrt(tau) - 2.0 * np.sqrt(np.pi * a) * erfcx(w))


def _m1(a: np.ndarray, tau: float, m0: np.ndarray) -> np.ndarray:
    r"""\int_0^tau e^{-a/s} s^{1/2} ds from the matching M0."""
    return (2.0 / 3.0) * (tau**1.5 * np.exp(-a / tau) - a * m0)


def reconstruct_psi(run: VolterraRun, x, t: float) -> np.ndarray:
    r"""psi_v(x, t) from the run, for t on the run grid.

    psi_v(x, t) = psi_free(x, t)
                  + \sqrt{i/pi} \int_0^t e^{i (x - c(t - s))^2 / 4s} Y(t - s) s^{-1/2} ds.

    Writing d0 = x - c(t), the factor e^{i d0^2 / 4s} s^{-1/2} is integrated
    exactly (via erfc moments) against the piecewise-linear interpolant of the
    slowly varying remainder R(s) = e^{i (d(s)^2 - d0^2)/4s} Y(t - s), whose
    s -> 0 limit is e^{i d0 b(t)} Y(t).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = run.h
    i = int(round(t / h))
    if abs(i * h - t) > 1e-9 * max(1.0, t) or i < 0 or i >= run.Y.values.size:
        raise ValueError(f"t={t} is not on the run grid")
    g = run.gauge
    free = free_evolve_at(run.psi0, x, t)
    if i == 0:
        return free
    tj = h * np.arange(i + 1)  # s values
    ct = eval_field(g, "c", i * h)
    bt = eval_field(g, "b", i * h)
    c_back = eval_field(g, "c", i * h - tj)
    Yb = run.Y.values[i::-1][: i + 1]
    d0 = x - ct
    a = -0.25j * d0 * d0
    # R at the nodes, rows x, columns s_j
    d = x[:, None] - c_back[None, 1:]
    R = np.empty((x.size, i + 1), dtype=complex)
    R[:, 0] = np.exp(1j * d0 * bt) * Yb[0]
    R[:, 1:] = np.exp(1j * (d * d - d0[:, None] ** 2) / (4.0 * tj[None, 1:])) * Yb[None, 1:]
    tiny = np.abs(d0) < 1e-12
    # moments at panel edges; for a = 0 they reduce to powers of tau
    tau = tj[None, 1:]
    a_safe = np.where(tiny, 1.0, a)[:, None]
    m0 = _m0(a_safe, tau)
    m1 = _m1(a_safe, tau, m0)
    m0 = np.where(tiny[:, None], 2.0 * np.sqrt(tau), m0)
    m1 = np.where(tiny[:, None], (2.0 / 3.0) * tau**1.5, m1)
    zero = np.zeros((x.size, 1), dtype=complex)
    P0 = np.diff(np.hstack([zero, m0]), axis=1)  # panel integrals of e^{-a/s} s^{-1/2}
    P1 = np.diff(np.hstack([zero, m1]), axis=1)  # ... times s
    lo, hi = tj[:-1], tj[1:]
    # linear interpolant: R_j (hi - s)/h + R_{j+1} (s - lo)/h
    wl = (hi[None, :] * P0 - P1) / h
    wr = (P1 - lo[None, :] * P0) / h
    out = np.sum(wl * R[:, :-1] + wr * R[:, 1:], axis=1)
    # sqrt-start defect, as in the solver
    beta = 2.0 * SQRT_I_OVER_PI * run.Y.values[0]
    s_mid = t - (np.arange(i) + 0.5) * h
    dm = x[:, None] - eval_field(g, "c", (np.arange(i) + 0.5) * h)[None, :]
    kern = np.exp(1j * dm * dm / (4.0 * s_mid[None, :])) / np.sqrt(s_mid[None, :])
    out = out + beta * (kern @ _sqrt_defect(i, h))
    return free + SQRT_I_OVER_PI * out


def survival(run: VolterraRun, L: float, t: float, n_x: int = 401) -> float:
    r"""\int_{-L}^{L} |psi(x, t)|^2 dx in the electric (lab) frame.

    |psi_E(y, t)| = |psi_v(y + c(t), t)|, so the window is sampled at the
    shifted points directly instead of interpolating a velocity-frame grid.
    """
    y = np.linspace(-L, L, n_x)
    ct = eval_field(run.gauge, "c", t)
    psi = reconstruct_psi(run, y + ct, t)
    return float(np.trapezoid(np.abs(psi) ** 2, y))


# ---------------------------------------------------------------- fits


Model = Literal["exponential", "power"]


@dataclass(frozen=True)
class TailFit:
    """Least-squares fit of log|Y| on a window.

    ``value`` is the decay rate (|Y| ~ e^{-value t}) for the exponential model
    and the exponent (|Y| ~ t^{value}) for the power model.
    """

    window: tuple[float, float]
    model: str
    value: float
    intercept: float
    r2: float

    def __post_init__(self) -> None:
        if not self.window[1] > self.window[0] >= 0:
            raise ValueError(f"bad fit window {self.window}")

    @property
    def low_confidence(self) -> bool:
        return self.r2 < 0.9


def _lstsq_with_phases(x: np.ndarray, y: np.ndarray, phase: np.ndarray | None):
    if phase is None:
        A = np.column_stack([x, np.ones_like(x)])
    else:
        labels, idx = np.unique(phase, return_inverse=True)
        A = np.zeros((x.size, 1 + labels.size))
        A[:, 0] = x
        A[np.arange(x.size), 1 + idx] = 1.0
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return coef[0], float(np.mean(coef[1:])), float(r2)


def fit_decay(
    Y: TimeSeries,
    window: tuple[float, float] | None = None,
    model: Model = "exponential",
    period: float | None = None,
    floor: float = 1e-13,
) -> TailFit:
    """Fit |Y| on ``window`` by an exponential or a power law.

    With ``period`` given, each sample phase within the period gets its own
    intercept, so a periodic modulation of |Y| (as carried by a Floquet
    resonance) does not bias the slope. Without a window, the exponential fit
    uses the interval where the local log-slope varies least and the power
    fit uses the last decade of the data.
    """
    t = Y.times
    mag = np.abs(Y.values)
    if window is None:
        window = _auto_window(t, mag, model, period)
    t1, t2 = window
    sel = (t >= t1) & (t <= t2)
    if sel.sum() < 3:
        raise ValueError(f"window {window} holds fewer than 3 samples")
    if np.any(mag[sel] <= 10.0 * floor):
        raise ValueError("window reaches the noise floor")
    ly = np.log(mag[sel])
    ts = t[sel]
    phase = None
    if period is not None:
        phase = np.rint(np.mod(ts, period) / Y.dt).astype(int) % max(1, int(round(period / Y.dt)))
    if model == "exponential":
        slope, icpt, r2 = _lstsq_with_phases(ts, ly, phase)
        return TailFit((float(t1), float(t2)), model, float(-slope), icpt, r2)
    if model == "power":
        if t1 <= 0:
            raise ValueError("power-law window must start at t > 0")
        slope, icpt, r2 = _lstsq_with_phases(np.log(ts), ly, phase)
        return TailFit((float(t1), float(t2)), model, float(slope), icpt, r2)
    raise ValueError(f"unknown model {model!r}")


def _auto_window(t: np.ndarray, mag: np.ndarray, model: str, period: float | None):
    t_end = t[-1]
    if model == "power":
        return (t_end / 10.0, t_end)
    span = t_end / 3.0
    step = period if period is not None else span / 8.0
    starts = np.arange(step, t_end - span + 1e-12, step)
    if starts.size == 0:
        return (t[1], t_end)
    best, best_var = None, np.inf
    lm = np.log(np.maximum(mag, 1e-300))
    for s0 in starts:
        sel = (t >= s0) & (t <= s0 + span)
        # local slopes over sub-blocks of one step each
        edges = np.arange(s0, s0 + span + 1e-12, step)
        vals = np.interp(edges, t[sel], lm[sel])
        if vals.size < 3:
            continue
        var = np.var(np.diff(vals))
        if var < best_var:
            best, best_var = (float(s0), float(s0 + span)), var
    if best is None:
        return (float(t[1]), float(t_end))
    return best
