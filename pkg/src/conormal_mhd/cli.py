"""Command-line entry point.

Configuration comes from built-in per-command defaults, then an optional flat
`key = value` file (--config), then flags; later sources win.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import conormal as cn
from . import experiments as ex
from .dynamics import SolverConfig, State, evolve, verify_linear
from .io import (
    parse_float_list,
    parse_length,
    read_checkpoint,
    read_config_file,
    write_checkpoint,
    write_csv,
    write_json,
)
from .spectral import C, GridSpec, SpectralField, plan_grid

COMMANDS = (
    "simulate",
    "decay-study",
    "uniform-study",
    "limit-study",
    "probe-inequalities",
    "verify-linear",
    "ledger",
)


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "simulate"
    # grid
    n1: int = 32
    n2: int = 32
    n3: int = 17
    l1: float = 2 * math.pi
    l2: float = 2 * math.pi
    l3: float = 2 * math.pi
    # solver
    dt: Optional[float] = None
    cfl: float = 0.4
    t_end: float = 1.0
    rk_order: int = 3
    nonlinear: bool = True
    eps: float = 0.0
    eps_list: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    sample_every: int = 1
    # conormal
    m: int = 4
    s: float = 0.95
    sigma: float = 0.92
    phi: str = "slab"
    # initial data
    seed: int = 0
    amplitude: float = 1e-3
    spectrum: str = "low-band"
    k_min: float = 0.0
    k_max: float = 1.0
    slope: float = 0.0
    j_max: int = 2
    # probes
    samples: int = 100
    # outputs
    out: str = "."
    checkpoint_in: Optional[str] = None
    checkpoint_out: Optional[str] = None

    def grid_spec(self) -> GridSpec:
        return GridSpec(self.n1, self.n2, self.n3, self.l1, self.l2, self.l3)

    def solver(self) -> SolverConfig:
        return SolverConfig(dt=self.dt, cfl=self.cfl, t_end=self.t_end, rk_order=self.rk_order, nonlinear=self.nonlinear)

    def conormal(self) -> cn.ConormalConfig:
        return cn.ConormalConfig(m=self.m, s=self.s, sigma=self.sigma, phi_choice=cn.PhiChoice(self.phi))

    def data(self) -> ex.InitialDataSpec:
        return ex.InitialDataSpec(
            seed=self.seed,
            amplitude=self.amplitude,
            spectrum=ex.Spectrum(self.spectrum),
            k_min=self.k_min,
            k_max=self.k_max,
            slope=self.slope,
            j_max=self.j_max,
        )

    def validate(self) -> None:
        self.grid_spec().validate()
        self.solver()
        self.conormal()
        self.data()
        if any(a <= b for a, b in zip(self.eps_list, self.eps_list[1:])):
            raise UsageError(f"eps list must be sorted strictly descending, got {self.eps_list}")
        if self.eps < 0 or any(e < 0 for e in self.eps_list):
            raise UsageError("eps values must be nonnegative")
        if self.sample_every < 1:
            raise UsageError("sample-every must be a positive integer")
        # resolution guard: an m-fold Z3 chain needs vertical headroom above the dealiased band
        grid = plan_grid(self.grid_spec())
        if grid.M < self.m + 1:
            raise UsageError(f"n3={self.n3} cannot carry {self.m} conormal derivatives; use n3 >= {self.m + 2}")
        margin = grid.M - 1 - grid.retained_vertical_max()
        if margin < self.m and self.command not in ("verify-linear", "probe-inequalities"):
            warnings.warn(
                f"vertical headroom {margin} < m={self.m}: ledgers check the aliased tail and may refuse",
                RuntimeWarning,
            )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULTS = {
    "simulate": {},
    "decay-study": dict(n1=64, n2=64, n3=17, l1=16 * math.pi, l2=16 * math.pi, t_end=50.0),
    "uniform-study": dict(l1=8 * math.pi, l2=8 * math.pi, t_end=20.0, eps_list=[1e-2, 1e-3, 1e-4]),
    "limit-study": dict(
        l1=8 * math.pi, l2=8 * math.pi, t_end=10.0, m=5, eps_list=[1e-1, 1e-2, 1e-3, 1e-4], sample_every=4
    ),
    "probe-inequalities": dict(n1=16, n2=16, n3=17),
    "verify-linear": dict(n1=16, n2=16, n3=9, t_end=10.0, dt=0.5),
    "ledger": {},
}

_PARSERS = {
    "n1": int,
    "n2": int,
    "n3": int,
    "l1": parse_length,
    "l2": parse_length,
    "l3": parse_length,
    "dt": lambda v: None if str(v).lower() in ("", "none", "cfl") else float(v),
    "cfl": float,
    "t_end": float,
    "rk_order": int,
    "nonlinear": lambda v: str(v).lower() in ("1", "true", "yes", "on"),
    "eps": float,
    "eps_list": parse_float_list,
    "sample_every": int,
    "m": int,
    "s": float,
    "sigma": float,
    "phi": str,
    "seed": int,
    "amplitude": float,
    "spectrum": str,
    "k_min": float,
    "k_max": float,
    "slope": float,
    "j_max": int,
    "samples": int,
    "out": str,
    "checkpoint_in": str,
    "checkpoint_out": str,
}


CSV_HELP = "ledger CSV columns, in order: " + ", ".join(cn.LEDGER_COLUMNS)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="conormal-mhd",
        description="Anisotropic MHD on a slab: simulations, studies and diagnostics.",
        epilog=CSV_HELP + ". Exit codes: 0 success, 2 study FAIL, 1 error.",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="flat `key = value` file; flags override it")
    for key in _PARSERS:
        helptext = "comma-separated list on the study commands" if key == "eps" else None
        p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar=key.upper(), help=helptext)
    return p


_LIST_EPS = ("uniform-study", "limit-study")


def _coerce(key: str, value, command: str = ""):
    if key == "eps" and command in _LIST_EPS:
        key = "eps_list"
    try:
        return _PARSERS[key](value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad value for {key}: {value!r} ({exc})") from exc


def _target(key: str, command: str) -> str:
    return "eps_list" if key == "eps" and command in _LIST_EPS else key


def resolve_config(argv: list[str]) -> RunConfig:
    args = build_parser().parse_args(argv)
    merged = dict(DEFAULTS[args.command])
    if args.config:
        for key, value in read_config_file(args.config).items():
            if key not in _PARSERS:
                raise UsageError(f"unknown config key {key!r} in {args.config}")
            merged[_target(key, args.command)] = _coerce(key, value, args.command)
    for key in _PARSERS:
        value = getattr(args, key)
        if value is not None:
            merged[_target(key, args.command)] = _coerce(key, value, args.command)
    cfg = RunConfig(command=args.command, **merged)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# commands


def _out(cfg: RunConfig, name: str) -> Path:
    d = Path(cfg.out)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def cmd_simulate(cfg: RunConfig) -> int:
    grid = plan_grid(cfg.grid_spec())
    ccfg = cfg.conormal()
    if cfg.checkpoint_in:
        state = read_checkpoint(cfg.checkpoint_in, grid).with_eps(cfg.eps)
    else:
        state = ex.gen_initial_data(cfg.data(), grid, ccfg, cfg.eps)
    traj = evolve(state, cfg.solver(), cfg.sample_every, lambda s: cn.ledger(s, ccfg).row())
    write_csv(_out(cfg, "ledger.csv"), cn.LEDGER_COLUMNS, traj.observations)
    write_checkpoint(traj.final, cfg.checkpoint_out or _out(cfg, "final.mhdc"))
    print(f"simulate: {traj.steps} steps to t={traj.final.t:.6g}, {len(traj.observations)} ledger rows")
    return 0


def _report(cfg: RunConfig, name: str, body: dict, passed: bool) -> int:
    body = {"command": cfg.command, "config": cfg.to_dict(), "passed": passed, **body}
    path = _out(cfg, name)
    write_json(path, body)
    print(f"{cfg.command}: {'PASS' if passed else 'FAIL'} ({path})")
    return 0 if passed else 2


def cmd_decay(cfg: RunConfig) -> int:
    grid = plan_grid(cfg.grid_spec())
    rep = ex.run_decay_study(cfg.data(), grid, cfg.solver(), cfg.conormal(), eps=cfg.eps, sample_every=cfg.sample_every)
    rows = [
        {"t": t, "E_tan_m1": e, "weighted_E_tan_m1": w, "weighted_D_integral": i}
        for t, e, w, i in zip(rep.times, rep.e_tan, rep.weighted_e, rep.weighted_integral)
    ]
    write_csv(_out(cfg, "decay_series.csv"), list(rows[0]), rows)
    return _report(cfg, "decay_report.json", rep.to_dict(), rep.passed)


def cmd_uniform(cfg: RunConfig) -> int:
    grid = plan_grid(cfg.grid_spec())
    rep = ex.run_uniform_bound_study(
        cfg.data(), grid, cfg.eps_list, cfg.solver(), cfg.conormal(), sample_every=cfg.sample_every
    )
    return _report(cfg, "uniform_report.json", rep.to_dict(), rep.passed)


def cmd_limit(cfg: RunConfig) -> int:
    grid = plan_grid(cfg.grid_spec())
    rep = ex.run_limit_study(cfg.data(), grid, cfg.eps_list, cfg.solver(), m=cfg.m, sample_every=cfg.sample_every)
    body = rep.to_dict()
    body["slopes"] = {
        "l2": {"value": rep.slope_l2, "min": rep.thresholds["slope_l2_min"], "eps": rep.eps},
        "linf": {"value": rep.slope_linf, "min": rep.thresholds["slope_linf_min"], "eps": rep.eps},
    }
    body["per_eps"] = [
        {"eps": e, "sup_l2": a, "sup_linf": b} for e, a, b in zip(rep.eps, rep.sup_l2, rep.sup_linf)
    ]
    return _report(cfg, "limit_report.json", body, rep.passed)


def _random_scalar(grid, rng) -> SpectralField:
    """Zero-horizontal-mean random cosine-basis field band-limited to half the grid."""
    coef = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    sp = grid.spec
    n1 = np.abs(np.fft.fftfreq(sp.N1, 1 / sp.N1))[:, None, None]
    n2 = np.abs(np.fft.fftfreq(sp.N2, 1 / sp.N2))[None, :, None]
    j = np.arange(sp.N3)[None, None, :]
    band = (n1 <= sp.N1 // 4 - 1) & (n2 <= sp.N2 // 4 - 1) & (j <= grid.M // 2 - 1)
    coef = coef * band
    coef[0, 0, :] = 0.0
    from .spectral import to_physical, to_spectral

    f = SpectralField(grid, coef, C)
    return to_spectral(grid, to_physical(f), C)


def cmd_probe(cfg: RunConfig) -> int:
    grid = plan_grid(cfg.grid_spec())
    rng = np.random.default_rng(cfg.seed)
    worst: dict = {}
    violations = 0
    min_gap = math.inf
    for _ in range(cfg.samples):
        f, g, h = (_random_scalar(grid, rng) for _ in range(3))
        rep = cn.sobolev_probe(f, g, h, cfg.s)
        for k, v in rep.ratios.items():
            if v is not None:
                worst[k] = max(worst.get(k, 0.0), v)
        gap = cn.interpolation_gap(f, cfg.s)
        min_gap = min(min_gap, gap)
        violations += gap < -1e-12
    body = {
        "samples": cfg.samples,
        "s": cfg.s,
        "max_ratios": worst,
        "interpolation": {"violations": violations, "min_gap": min_gap, "tolerance": 1e-12},
    }
    return _report(cfg, "probe_report.json", body, violations == 0)


def cmd_verify_linear(cfg: RunConfig) -> int:
    grid = plan_grid(cfg.grid_spec())
    dt = cfg.dt if cfg.dt is not None else 0.5
    res = verify_linear(grid, cfg.eps, cfg.t_end, dt, cfg.seed)
    res["tolerance"] = 1e-12
    return _report(cfg, "verify_linear.json", res, res["max_rel_error"] <= 1e-12)


def cmd_ledger(cfg: RunConfig) -> int:
    if not cfg.checkpoint_in:
        raise UsageError("ledger needs --checkpoint-in PATH")
    state: State = read_checkpoint(cfg.checkpoint_in)
    row = cn.ledger(state, cfg.conormal()).row()
    write_csv(_out(cfg, "ledger.csv"), cn.LEDGER_COLUMNS, [row])
    for k in cn.LEDGER_COLUMNS:
        print(f"{k} = {row[k]!r}")
    return 0


HANDLERS = {
    "simulate": cmd_simulate,
    "decay-study": cmd_decay,
    "uniform-study": cmd_uniform,
    "limit-study": cmd_limit,
    "probe-inequalities": cmd_probe,
    "verify-linear": cmd_verify_linear,
    "ledger": cmd_ledger,
}


def cli_main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        cfg = resolve_config(argv)
    except SystemExit as exc:  # argparse usage errors
        return 1 if exc.code else 0
    except (UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return HANDLERS[cfg.command](cfg)
    except (UsageError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
