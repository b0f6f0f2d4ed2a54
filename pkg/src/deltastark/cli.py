"""Command-line driver: configuration, dispatch, outputs and the matrix cache.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (including a
failed oracle in ``validate``).
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import sys
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import click
import numpy as np
import scipy
import yaml

from .field import FieldSpec, derive_gauge
from .operator import (
    BranchPointError,
    ContourQuad,
    NearPoleError,
    Numerics,
    OperatorMatrix,
    build_K,
)
from .states import InitialState

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- configuration


def _take(block: dict, allowed: dict[str, Any], where: str) -> dict:
    """Fill defaults from ``allowed`` and reject keys it does not list."""
    if block is None:
        block = {}
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected a mapping")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return {k: block.get(k, v) for k, v in allowed.items()}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration (see README for the schema)."""

    field: FieldSpec
    initial_state: InitialState
    numerics: Numerics
    scan: dict = field(default_factory=dict)
    resonance: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    propagate: dict = field(default_factory=dict)
    gamow: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def digest(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        top = _take(
            data,
            {
                "field": None,
                "initial_state": {},
                "numerics": {},
                "scan": {},
                "resonance": {},
                "sweep": {},
                "propagate": {},
                "gamow": {},
            },
            "config",
        )
        if top["field"] is None:
            raise ConfigError("config: 'field' block is required")
        fb = _take(top["field"], {"omega": None, "epsilon": 1.0, "coeffs": None}, "field")
        coeffs = fb["coeffs"]
        if not coeffs:
            raise ConfigError("field.coeffs: at least one Fourier coefficient is required")
        try:
            table = {}
            for entry in coeffs:
                n, re, im = entry
                n = int(n)
                if n < 1:
                    raise ConfigError(f"field.coeffs: mode {n} must be >= 1")
                table[n] = complex(float(re), float(im))
            vec = tuple(table.get(n, 0j) for n in range(1, max(table) + 1))
            spec = FieldSpec(float(fb["omega"]), vec, float(fb["epsilon"]))
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field: {exc}") from exc

        ib = _take(top["initial_state"], {"kind": "cosine_bump", "L0": 1.0, "normalize": True}, "initial_state")
        try:
            psi0 = InitialState(ib["kind"], float(ib["L0"]), bool(ib["normalize"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"initial_state: {exc}") from exc

        d = Numerics()
        nb = _take(
            top["numerics"],
            {
                "n_f": d.n_f,
                "t_grid": None,
                "s_panels": d.s_panels,
                "s_order": d.s_order,
                "k_max": d.k_max,
                "contour_arc": d.contour.arc,
                "contour_ray_order": d.contour.ray_order,
                "tol": d.contour.tol,
                "y_extra": d.y_extra,
            },
            "numerics",
        )
        try:
            n_f = int(nb["n_f"])
            if n_f < 1:
                raise ConfigError("numerics.n_f must be >= 1")
            t_grid = int(nb["t_grid"]) if nb["t_grid"] is not None else max(d.t_grid, 8 * n_f)
            num = Numerics(
                n_f=n_f,
                t_grid=t_grid,
                s_panels=int(nb["s_panels"]),
                s_order=int(nb["s_order"]),
                k_max=int(nb["k_max"]),
                contour=ContourQuad(
                    arc=int(nb["contour_arc"]),
                    ray_order=int(nb["contour_ray_order"]),
                    tol=float(nb["tol"]),
                ),
                y_extra=int(nb["y_extra"]),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"numerics: {exc}") from exc

        om = spec.omega
        scan = _take(
            top["scan"],
            {
                "region": [0.05 * om, 0.95 * om, -3.0 * om, 0.2 * om],
                "resolution": [24, 16],
                "threshold": 0.05,
            },
            "scan",
        )
        if len(scan["region"]) != 4 or len(scan["resolution"]) != 2:
            raise ConfigError("scan: region needs 4 numbers and resolution 2")
        lo, hi = float(scan["region"][0]), float(scan["region"][1])
        if not (0 < lo < hi < om):
            raise ConfigError("scan.region: real range must lie inside (0, omega)")
        res = _take(top["resonance"], {"guess": None}, "resonance")
        if res["guess"] is not None and len(res["guess"]) != 2:
            raise ConfigError("resonance.guess: expected [re, im]")
        sweep = _take(top["sweep"], {"epsilons": [0.05, 0.1, 0.2, 0.3, 0.4]}, "sweep")
        eps = [float(e) for e in sweep["epsilons"]]
        if not eps or any(b <= a for a, b in zip(eps, eps[1:])) or eps[0] <= 0:
            raise ConfigError("sweep.epsilons: need a positive increasing list")
        prop = _take(
            top["propagate"],
            {"t_end": 60.0, "h": None, "L": 10.0, "n_x": 201, "survival_times": None},
            "propagate",
        )
        if float(prop["t_end"]) <= 0 or (prop["h"] is not None and float(prop["h"]) <= 0):
            raise ConfigError("propagate: t_end and h must be positive")
        gam = _take(
            top["gamow"],
            {"x_range": [-5.0, 5.0], "n_x": 101, "n_t": 8, "gauge": "electric", "guess": None},
            "gamow",
        )
        if gam["gauge"] not in ("electric", "magnetic", "velocity"):
            raise ConfigError(f"gamow.gauge: unknown gauge {gam['gauge']!r}")
        return cls(spec, psi0, num, scan, res, sweep, prop, gam, raw=data)


def load_config(path: str | None) -> RunConfig:
    if path is None:
        data = {"field": {"omega": 1.5, "epsilon": 0.3, "coeffs": [[1, 0.5, 0.0]]}}
    else:
        try:
            data = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------- cache


class MatrixCache:
    """On-disk store of OperatorMatrix bytes keyed by field, numerics and sigma."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(sigma: complex, g, num: Numerics) -> str:
        s = complex(sigma)
        ident = (
            g.key(),
            float(g.epsilon),
            num.key(),
            round(s.real, 12),
            round(s.imag, 12),
        )
        return hashlib.sha256(repr(ident).encode()).hexdigest()

    def build(self, sigma: complex, g, num: Numerics = Numerics(), form: str = "auto") -> OperatorMatrix:
        path = self.root / f"{self.key(sigma, g, num)}.kmat"
        if path.exists():
            self.hits += 1
            return OperatorMatrix.from_bytes(path.read_bytes())
        self.misses += 1
        K = build_K(sigma, g, num, form)
        data = K.to_bytes()
        with self._lock:
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(data)
            tmp.replace(path)
        return OperatorMatrix.from_bytes(data)


# ---------------------------------------------------------------- outputs


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _versions() -> dict:
    from importlib.metadata import PackageNotFoundError, version

    try:
        pkg = version("artifact")
    except PackageNotFoundError:
        pkg = "unknown"
    return {
        "artifact": pkg,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


@dataclass
class Context:
    cfg: RunConfig
    out: Path
    threads: int
    cache: MatrixCache | None
    timings: dict = field(default_factory=dict)

    @property
    def builder(self):
        return self.cache.build if self.cache is not None else build_K

    def manifest(self, command: str, files: list[str]) -> None:
        write_json(
            self.out / "manifest.json",
            {
                "command": command,
                "config_sha256": self.cfg.digest(),
                "versions": _versions(),
                "timings_s": self.timings,
                "files": sorted(files),
            },
        )


# ---------------------------------------------------------------- commands


def cmd_scan(ctx: Context) -> list[str]:
    from .resonance import scan_strip

    cfg = ctx.cfg
    g = derive_gauge(cfg.field)
    sc = cfg.scan
    res = scan_strip(
        g,
        tuple(float(v) for v in sc["region"]),
        tuple(int(v) for v in sc["resolution"]),
        cfg.numerics,
        threshold=float(sc["threshold"]),
        workers=ctx.threads,
        builder=ctx.builder,
    )
    rows = [
        (res.re[j], res.im[i], res.values[i, j])
        for i in range(res.im.size)
        for j in range(res.re.size)
    ]
    write_csv(ctx.out / "scan.csv", ["sigma_re", "sigma_im", "min_singular_value"], rows)
    write_csv(
        ctx.out / "candidates.csv",
        ["sigma_re", "sigma_im"],
        [(c.real, c.imag) for c in res.candidates],
    )
    return ["scan.csv", "candidates.csv"]


def _locate(ctx: Context, guess) -> Any:
    from .resonance import epsilon_sweep, find_pole, undriven_pole

    cfg = ctx.cfg
    g = derive_gauge(cfg.field)
    if guess is not None:
        return find_pole(g, complex(*guess), num=cfg.numerics, builder=ctx.builder)
    eps = cfg.field.epsilon
    if eps == 0:
        return find_pole(g, complex(undriven_pole(g.omega)), num=cfg.numerics, builder=ctx.builder)
    # continue from the undriven pole through a short ladder of amplitudes
    ladder = [eps / 8, eps / 4, eps / 2]
    sw = epsilon_sweep(cfg.field, ladder, cfg.numerics, builder=ctx.builder)
    if sw.error is not None:
        from .resonance import PoleSearchError

        raise PoleSearchError(sw.error, [r.sigma for r in sw.rows])
    last = sw.rows[-1].sigma
    base = complex(undriven_pole(g.omega))
    return find_pole(g, base + (last - base) * 4.0, num=cfg.numerics, builder=ctx.builder)


def cmd_resonance(ctx: Context) -> list[str]:
    from .operator import build_y0
    from .resonance import residue_weight

    cfg = ctx.cfg
    g = derive_gauge(cfg.field)
    r = _locate(ctx, cfg.resonance["guess"])
    alpha = residue_weight(r, build_y0(r.sigma_k, cfg.initial_state, g, cfg.numerics))
    write_csv(
        ctx.out / "resonance.csv",
        ["sigma_re", "sigma_im", "gamma", "order", "alpha_re", "alpha_im", "residual", "n_f"],
        [
            (
                r.sigma_k.real,
                r.sigma_k.imag,
                r.gamma_k,
                r.order,
                alpha.real,
                alpha.imag,
                r.residual,
                cfg.numerics.n_f,
            )
        ],
    )
    return ["resonance.csv"]


def cmd_sweep(ctx: Context) -> list[str]:
    from .resonance import epsilon_sweep

    cfg = ctx.cfg
    sw = epsilon_sweep(cfg.field, cfg.sweep["epsilons"], cfg.numerics, builder=ctx.builder)
    write_csv(
        ctx.out / "sweep.csv",
        ["epsilon", "sigma_re", "sigma_im", "gamma"],
        [(r.epsilon, r.sigma.real, r.sigma.imag, r.gamma) for r in sw.rows],
    )
    write_json(ctx.out / "sweep.json", {"loglog_slope": sw.slope, "error": sw.error})
    if sw.error is not None:
        raise _Numerical(sw.error)
    return ["sweep.csv", "sweep.json"]


def cmd_propagate(ctx: Context) -> list[str]:
    from .timedomain import fit_decay, reconstruct_psi, survival, volterra_solve

    cfg = ctx.cfg
    p = cfg.propagate
    run = volterra_solve(
        cfg.field, cfg.initial_state, float(p["t_end"]), None if p["h"] is None else float(p["h"])
    )
    t = run.times
    Y = run.Y.values
    write_csv(ctx.out / "Y.csv", ["t", "re", "im", "abs"], zip(t, Y.real, Y.imag, np.abs(Y)))
    T = run.gauge.period
    if p["survival_times"] is None:
        idx = np.unique(np.linspace(0, t.size - 1, 21).astype(int))
    else:
        idx = np.unique([int(round(float(s) / run.h)) for s in p["survival_times"]])
        idx = idx[(idx >= 0) & (idx < t.size)]
    L = float(p["L"])
    write_csv(
        ctx.out / "survival.csv",
        ["t", "survival"],
        [(t[i], survival(run, L, t[i], n_x=int(p["n_x"]))) for i in idx],
    )
    x = np.linspace(-L, L, int(p["n_x"]))
    psi = reconstruct_psi(run, x, t[-1])
    write_csv(ctx.out / "psi.csv", ["x", "re", "im"], zip(x, psi.real, psi.imag))
    fits = {}
    for model in ("exponential", "power"):
        try:
            f = fit_decay(run.Y, None, model, period=T)
            fits[model] = {
                "window": list(f.window),
                "value": f.value,
                "r2": f.r2,
                "low_confidence": f.low_confidence,
            }
        except ValueError as exc:
            fits[model] = {"error": str(exc)}
    write_json(ctx.out / "fit.json", fits)
    return ["Y.csv", "survival.csv", "psi.csv", "fit.json"]


def cmd_gamow(ctx: Context) -> list[str]:
    from .gamow import eval_gamow, floquet_residual_parts, gamow_from_resonance

    cfg = ctx.cfg
    g = derive_gauge(cfg.field)
    gm = cfg.gamow
    r = _locate(ctx, gm["guess"] if gm["guess"] is not None else cfg.resonance["guess"])
    gv = gamow_from_resonance(r, g)
    write_csv(
        ctx.out / "gamow_coeffs.csv",
        ["m", "psiL_re", "psiL_im", "psiR_re", "psiR_im", "lambda_re", "lambda_im"],
        zip(gv.modes, gv.psi_L.real, gv.psi_L.imag, gv.psi_R.real, gv.psi_R.imag, gv.lam.real, gv.lam.imag),
    )
    x = np.linspace(float(gm["x_range"][0]), float(gm["x_range"][1]), int(gm["n_x"]))
    ts = g.period * np.arange(int(gm["n_t"])) / int(gm["n_t"])
    rows = []
    for tv in ts:
        vals = eval_gamow(gv, x, tv, gm["gauge"])
        rows.extend((xv, tv, v.real, v.imag, gm["gauge"]) for xv, v in zip(x, vals))
    with open(ctx.out / "gamow_samples.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "t", "re", "im", "gauge"])
        for xv, tv, re, im, gauge in rows:
            w.writerow([_fmt(xv), _fmt(tv), _fmt(re), _fmt(im), gauge])
    rep = floquet_residual_parts(gv)
    write_json(
        ctx.out / "gamow.json",
        {
            "sigma_re": r.sigma_k.real,
            "sigma_im": r.sigma_k.imag,
            "residual_pde": rep.pde,
            "residual_jump": rep.jump,
            "residual_continuity": rep.continuity,
            "cutoff_mode": gv.cutoff_mode(),
        },
    )
    return ["gamow_coeffs.csv", "gamow_samples.csv", "gamow.json"]


def cmd_validate(ctx: Context) -> list[str]:
    from .validation import run_checks

    checks = run_checks(ctx.cfg)
    write_json(ctx.out / "validate.json", [asdict(c) for c in checks])
    failed = [c.name for c in checks if not c.passed]
    for c in checks:
        click.echo(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    if failed:
        raise _Numerical(f"failed checks: {', '.join(failed)}", files=["validate.json"])
    return ["validate.json"]


class _Numerical(RuntimeError):
    def __init__(self, msg: str, files: list[str] | None = None):
        self.files = files or []
        super().__init__(msg)


COMMANDS = {
    "scan": cmd_scan,
    "resonance": cmd_resonance,
    "sweep": cmd_sweep,
    "propagate": cmd_propagate,
    "gamow": cmd_gamow,
    "validate": cmd_validate,
}

NUMERICAL_ERRORS = (
    ArithmeticError,
    np.linalg.LinAlgError,
    BranchPointError,
    NearPoleError,
    RuntimeError,
    ValueError,
)


def _run(name: str, config: str | None, out: str, threads: int, cache: str | None) -> int:
    try:
        cfg = load_config(config)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg, out_dir, max(1, threads), MatrixCache(cache) if cache else None)
    start = time.perf_counter()
    try:
        files = COMMANDS[name](ctx)
    except _Numerical as exc:
        ctx.timings[name] = round(time.perf_counter() - start, 3)
        ctx.manifest(name, exc.files)
        click.echo(f"numerical failure: {exc}", err=True)
        return EXIT_NUMERICAL
    except NUMERICAL_ERRORS as exc:
        click.echo(f"numerical failure: {type(exc).__name__}: {exc}", err=True)
        return EXIT_NUMERICAL
    ctx.timings[name] = round(time.perf_counter() - start, 3)
    ctx.manifest(name, files)
    return 0


_common = [
    click.option("--config", "config", type=click.Path(dir_okay=False), default=None),
    click.option("--out", "out", type=click.Path(file_okay=False), default="out"),
    click.option("--threads", "threads", type=int, default=1),
    click.option("--cache", "cache", type=click.Path(file_okay=False), default=None),
]


@click.group()
def main() -> None:
    """Resonances and ionization of a driven delta-well atom."""


def _register(name: str, doc: str) -> None:
    def command(config, out, threads, cache):
        sys.exit(_run(name, config, out, threads, cache))

    command.__doc__ = doc
    for opt in reversed(_common):
        command = opt(command)
    main.command(name)(command)


_register("scan", "Smallest-singular-value map of 1 - K over the strip, with pole candidates.")
_register("resonance", "Locate the resonance pole and its residue weight.")
_register("sweep", "Track the pole through a list of field amplitudes.")
_register("propagate", "Solve the time-domain problem; write Y(t), survival and fits.")
_register("gamow", "Resonance profile: mode coefficients, samples and Floquet residual.")
_register("validate", "Run the built-in oracle checks and report pass/fail.")


if __name__ == "__main__":
    main()
