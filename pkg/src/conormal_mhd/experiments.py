"""Initial data, the three studies (decay, uniform-in-eps bound, vanishing
dissipation limit) and power-law fitting.

Every study is a pure function of its inputs: randomness comes only from the
seed in InitialDataSpec and reports carry no wall-clock data.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .conormal import (
    ConormalConfig,
    curl,
    full_functionals,
    horizontal_weight,
    tangential_pair,
    weighted_sq,
)
from .dynamics import SolverConfig, State, cfl_dt, evolve, rhs_nonlinear, step, tendency
from .spectral import (
    VELOCITY_BASES,
    Grid,
    GridSpec,
    SpectralVectorField,
    batch_to_physical,
    batch_to_spectral,
    leray_project,
)


class EmptyBand(ValueError):
    pass


class ScheduleMismatch(ValueError):
    pass


class TooFewPoints(ValueError):
    pass


class NonPositiveValues(ValueError):
    pass


class Spectrum(enum.Enum):
    LOW_BAND = "low-band"  # 0 < |k_h| <= k_max
    RING = "ring"  # k_min <= |k_h| <= k_max
    CUSTOM = "custom"  # ring with amplitude |k_h|^slope


@dataclass(frozen=True)
class InitialDataSpec:
    """Random divergence-free data, band-limited horizontally and vertically.

    amplitude is the target value of the full energy functional E(0); zero
    gives the zero state. Wavenumbers are physical (2 pi n / L).
    """

    seed: int = 0
    amplitude: float = 1e-3
    spectrum: Spectrum = Spectrum.LOW_BAND
    k_min: float = 0.0
    k_max: float = 1.0
    slope: float = 0.0
    j_max: int = 2
    concentration: bool = True  # vertical envelope vanishing at x3 = L3

    def __post_init__(self):
        if not self.amplitude >= 0 or not math.isfinite(self.amplitude):
            raise ValueError(f"amplitude must be finite and nonnegative, got {self.amplitude}")
        if self.k_max <= 0 or self.k_min < 0 or self.k_min > self.k_max:
            raise ValueError(f"need 0 <= k_min <= k_max and k_max > 0, got [{self.k_min}, {self.k_max}]")
        if self.j_max < 0:
            raise ValueError("j_max must be nonnegative")


def desk_grid_spec(N1: int = 64, N2: int = 64, N3: int = 17) -> GridSpec:
    """Default study box: 16 pi horizontally so low horizontal frequencies are well sampled."""
    return GridSpec(N1, N2, N3, 16 * np.pi, 16 * np.pi, 2 * np.pi)


def _band_mask(spec: InitialDataSpec, grid: Grid) -> np.ndarray:
    kh = np.sqrt(grid.kh2)
    lo = 0.0 if spec.spectrum is Spectrum.LOW_BAND else spec.k_min
    horiz = (kh > 0) & (kh >= lo - 1e-12) & (kh <= spec.k_max + 1e-12)
    j = np.arange(grid.spec.N3)
    # leave room for the envelope, which raises the vertical index by one
    jcap = spec.j_max if not spec.concentration else spec.j_max - 1
    vert = j <= jcap
    band = horiz & vert[None, None, :] & grid.mask
    return band


def gen_initial_data(
    spec: InitialDataSpec,
    grid: Grid,
    ccfg: ConormalConfig = ConormalConfig(),
    eps: float = 0.0,
) -> State:
    if spec.amplitude == 0:
        return State.zero(grid, eps)
    band = _band_mask(spec, grid)
    if not band.any():
        raise EmptyBand(
            f"no retained modes with |k_h| in [{spec.k_min}, {spec.k_max}] and j <= {spec.j_max} "
            f"on a {grid.shape} grid"
        )
    rng = np.random.default_rng(spec.seed)
    shape = (6,) + grid.shape
    coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if spec.spectrum is Spectrum.CUSTOM:
        kh = np.sqrt(grid.kh2)
        shaped = np.zeros_like(kh)
        np.power(kh, spec.slope, out=shaped, where=kh > 0)
        coef = coef * shaped
    coef = coef * band
    bases = VELOCITY_BASES * 2
    phys = batch_to_physical(grid, coef, bases)  # keeps the real part of the random field
    if spec.concentration:
        phys = phys * (0.5 * (1 + np.cos(np.pi * grid.x3 / grid.spec.L3)))
    coef = batch_to_spectral(grid, phys, bases)
    coef = np.where(grid.mask, coef, 0.0)
    u = leray_project(SpectralVectorField(grid, coef[:3]))
    b = leray_project(SpectralVectorField(grid, coef[3:]))
    u.coef[:, 0, 0, :] = 0.0
    b.coef[:, 0, 0, :] = 0.0
    state = State(u, b, 0.0, eps)
    e1, _ = full_functionals(state, ccfg.m, ccfg.s, ccfg.phi_choice)
    if not e1 > 0:
        raise EmptyBand("band produced a field with zero energy after projection")
    # E is a sum of squared seminorms, so E(lam x) = lam^2 E(x) exactly
    lam = math.sqrt(spec.amplitude / e1)
    return State(u * lam, b * lam, 0.0, eps)


# ---------------------------------------------------------------------------
# fitting


def fit_power_law(x, y, window: Optional[tuple[float, float]] = None) -> tuple[float, float, float]:
    """Least squares of log y on log x; returns (exponent, intercept, max |log residual|)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if window is not None:
        keep = (x >= window[0]) & (x <= window[1])
        x, y = x[keep], y[keep]
    if x.size < 3:
        raise TooFewPoints(f"need at least 3 points in the fit window, got {x.size}")
    if np.any(y <= 0) or np.any(x <= 0):
        raise NonPositiveValues("power-law fits need positive x and y")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return float(slope), float(intercept), float(np.abs(resid).max())


def _loglog_slope(x, y) -> float:
    if len(x) >= 3:
        return fit_power_law(x, y)[0]
    return float(math.log(y[1] / y[0]) / math.log(x[1] / x[0]))


def _geometric_subset(t: np.ndarray, lo: float, hi: float, n: int = 24) -> np.ndarray:
    """Indices of samples nearest to a geometric grid in 1 + t over [lo, hi]."""
    inside = np.flatnonzero((t >= lo - 1e-9) & (t <= hi + 1e-9))
    if inside.size <= n:
        return inside
    targets = np.geomspace(1 + t[inside[0]], 1 + t[inside[-1]], n) - 1
    picks = {int(inside[np.argmin(np.abs(t[inside] - x))]) for x in targets}
    return np.array(sorted(picks))


# ---------------------------------------------------------------------------
# parallel map over eps


def worker_count(n_tasks: int) -> int:
    env = os.environ.get("MHD_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


def _pmap(fn: Callable, items: Sequence) -> list:
    workers = worker_count(len(items))
    if workers == 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# decay study


@dataclass
class DecayStudyReport:
    times: list
    e_tan: list  # E_tan^{m-1}
    weighted_e: list  # (1 + t)^s E_tan^{m-1}
    weighted_integral: list  # int_0^t (1 + tau)^sigma D_tan^{m-1}
    energy0: float
    exponent: Optional[float]
    intercept: Optional[float]
    fit_residual: Optional[float]
    fit_window: tuple
    c_emp: float
    envelope_ratio: float
    integral_ratio: float
    thresholds: dict
    verdicts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def run_decay_study(
    data: InitialDataSpec,
    grid: Grid,
    cfg: SolverConfig,
    ccfg: ConormalConfig = ConormalConfig(),
    eps: float = 0.0,
    fit_window: tuple[float, float] = (5.0, 50.0),
    early: float = 5.0,
    exponent_max: float = -0.9,
    envelope_factor: float = 3.0,
    integral_ratio_max: float = 1.5,
    sample_every: int = 1,
) -> DecayStudyReport:
    """Evolve small data and test the algebraic decay envelope of E_tan^{m-1}."""
    state = gen_initial_data(data, grid, ccfg, eps)
    e0, _ = full_functionals(state, ccfg.m, ccfg.s, ccfg.phi_choice)
    k = ccfg.m - 1
    traj = evolve(state, cfg, sample_every, lambda s: tangential_pair(s, k))
    t = np.asarray(traj.times, float)
    e = np.array([o[0] for o in traj.observations])
    d = np.array([o[1] for o in traj.observations])
    weighted = (1 + t) ** ccfg.s * e
    integral = cumulative_trapezoid((1 + t) ** ccfg.sigma * d, t, initial=0.0) if t.size > 1 else np.zeros(1)

    exponent = intercept = resid = None
    idx = _geometric_subset(t, *fit_window)
    if idx.size >= 3 and np.all(e[idx] > 0):
        exponent, intercept, resid = fit_power_law(1 + t[idx], e[idx])

    w_early = weighted[t <= early + 1e-9].max() if t.size else 0.0
    w_late = weighted[t > early + 1e-9].max() if np.any(t > early + 1e-9) else 0.0
    envelope_ratio = float(w_late / w_early) if w_early > 0 else 0.0
    mid = int(np.argmin(np.abs(t - t[-1] / 2)))
    integral_ratio = float(integral[-1] / integral[mid]) if integral[mid] > 0 else 1.0
    c_emp = float(weighted.max() / e0) if e0 > 0 else 0.0

    zero = e0 == 0
    verdicts = {
        "exponent": zero or (exponent is not None and exponent <= exponent_max),
        "envelope": zero or envelope_ratio <= envelope_factor,
        "integral_bounded": zero or integral_ratio <= integral_ratio_max,
        "finite": bool(np.all(np.isfinite(weighted)) and np.all(np.isfinite(integral)) and math.isfinite(c_emp)),
    }
    return DecayStudyReport(
        times=t.tolist(),
        e_tan=e.tolist(),
        weighted_e=weighted.tolist(),
        weighted_integral=integral.tolist(),
        energy0=float(e0),
        exponent=exponent,
        intercept=intercept,
        fit_residual=resid,
        fit_window=tuple(fit_window),
        c_emp=c_emp,
        envelope_ratio=envelope_ratio,
        integral_ratio=integral_ratio,
        thresholds={
            "exponent_max": exponent_max,
            "envelope_factor": envelope_factor,
            "early_window": [0.0, early],
            "integral_ratio_max": integral_ratio_max,
            "s": ccfg.s,
            "sigma": ccfg.sigma,
        },
        verdicts=verdicts,
    )


# ---------------------------------------------------------------------------
# uniform-in-eps bound


@dataclass
class UniformBoundReport:
    eps: list
    ratios: list  # R(eps) = sup_t [E + int D] / E(0)
    energy0: float
    times: list
    energy: dict  # eps -> E(t)
    spread: float
    spread_max: float
    verdicts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["energy"] = {repr(k): v for k, v in self.energy.items()}
        d["passed"] = self.passed
        return d


def _uniform_member(args):
    state, cfg, ccfg, sample_every = args
    traj = evolve(state, cfg, sample_every, lambda s: full_functionals(s, ccfg.m, ccfg.s, ccfg.phi_choice))
    t = np.asarray(traj.times, float)
    e = np.array([o[0] for o in traj.observations])
    d = np.array([o[1] for o in traj.observations])
    cum = cumulative_trapezoid(d, t, initial=0.0) if t.size > 1 else np.zeros(1)
    return t, e, cum


def run_uniform_bound_study(
    data: InitialDataSpec,
    grid: Grid,
    eps_list: Sequence[float],
    cfg: SolverConfig,
    ccfg: ConormalConfig = ConormalConfig(),
    spread_max: float = 1.25,
    sample_every: int = 1,
) -> UniformBoundReport:
    if data.amplitude == 0:
        raise ValueError("uniform-bound ratios are undefined for zero initial data")
    base = gen_initial_data(data, grid, ccfg)
    e0, _ = full_functionals(base, ccfg.m, ccfg.s, ccfg.phi_choice)
    if cfg.dt is None:
        # shared schedule across eps so R(eps) differ only through eps
        cfg = SolverConfig(**{**asdict(cfg), "dt": cfl_dt(base, cfg.cfl)})
    jobs = [(base.with_eps(eps), cfg, ccfg, sample_every) for eps in eps_list]
    results = _pmap(_uniform_member, jobs)
    ratios = [float(np.max(e + cum) / e0) for _, e, cum in results]
    finite = all(math.isfinite(r) for r in ratios)
    spread = max(ratios) / min(ratios) if finite and min(ratios) > 0 else math.inf
    return UniformBoundReport(
        eps=[float(x) for x in eps_list],
        ratios=ratios,
        energy0=float(e0),
        times=results[0][0].tolist(),
        energy={float(eps): r[1].tolist() for eps, r in zip(eps_list, results)},
        spread=float(spread),
        spread_max=spread_max,
        verdicts={"finite": finite, "spread": spread <= spread_max},
    )


# ---------------------------------------------------------------------------
# vanishing-dissipation limit


def _h2_weight(grid: Grid) -> np.ndarray:
    """sum over |alpha| <= 2 of K^(2 alpha) with K = (k1, k2, kappa)."""
    a, b, c = grid.dk1**2, grid.dk2**2, grid.kappa**2
    return 1 + a + b + c + a * a + b * b + c * c + a * b + a * c + b * c


def difference_diagnostics(s_eps: State, s_0: State) -> dict:
    """Sizes of the difference (u^eps - u^0, b^eps - b^0) and of both solutions."""
    g = s_eps.grid
    du = s_eps.u - s_0.u
    db = s_eps.b - s_0.b
    l2 = math.sqrt(weighted_sq(du, 1.0) + weighted_sq(db, 1.0))
    phys = batch_to_physical(g, np.concatenate([du.coef, db.coef]), VELOCITY_BASES * 2)
    linf = float(max(np.sqrt((phys[:3] ** 2).sum(0)).max(), np.sqrt((phys[3:] ** 2).sum(0)).max()))
    h1 = horizontal_weight(g, 1)
    ebar = weighted_sq(du, h1) + weighted_sq(db, h1) + weighted_sq(curl(du), 1.0) + weighted_sq(curl(db), 1.0)
    w2, w2h = _h2_weight(g), horizontal_weight(g, 2)
    fields_ = (s_0.u, s_0.b, s_eps.u, s_eps.b)
    big_b = math.sqrt(sum(weighted_sq(f, w2) for f in fields_))
    big_bh = math.sqrt(sum(weighted_sq(f, w2h) for f in fields_))
    return {"l2": l2, "linf": linf, "ebar": ebar, "B": big_b, "B_h": big_bh}


def source_residual(s_eps: State, s_0: State) -> tuple[float, float]:
    """(||P f||, relative residual) for the source of the difference system.

    The difference obeys d_t ubar - d_11 ubar - d_2 bbar + grad pbar = f with
    f = eps (d_22 + d_33) u^eps + (difference of the quadratic terms), and the
    magnetic analogue with g = eps d_33 b^eps + (difference). Both sides are
    assembled independently and compared after projection.
    """
    g = s_eps.grid
    eps = s_eps.eps
    tu_e, tb_e = tendency(s_eps)
    tu_0, tb_0 = tendency(s_0)
    du = s_eps.u.coef - s_0.u.coef
    db = s_eps.b.coef - s_0.b.coef
    ik2 = 1j * g.dk2
    lhs_u = (tu_e - tu_0) + g.k1**2 * du - ik2 * db
    lhs_b = (tb_e - tb_0) + g.kh2 * db - ik2 * du
    nu_e, nb_e = rhs_nonlinear(s_eps)
    nu_0, nb_0 = rhs_nonlinear(s_0)
    f = -eps * (g.k2**2 + g.kappa**2) * s_eps.u.coef + (nu_e.coef - nu_0.coef)
    gg = -eps * g.kappa**2 * s_eps.b.coef + (nb_e.coef - nb_0.coef)
    size = math.sqrt(np.sum(np.abs(f) ** 2) + np.sum(np.abs(gg) ** 2))
    err = math.sqrt(np.sum(np.abs(lhs_u - f) ** 2) + np.sum(np.abs(lhs_b - gg) ** 2))
    scale = max(size, math.sqrt(np.sum(np.abs(lhs_u) ** 2) + np.sum(np.abs(lhs_b) ** 2)), 1e-300)
    return size, err / scale


@dataclass
class LimitStudyReport:
    eps: list
    times: list
    l2: dict  # eps -> time series of the L2 difference
    linf: dict
    ebar: dict
    big_b: dict
    big_bh: dict
    sup_l2: list
    sup_linf: list
    slope_l2: Optional[float]
    slope_linf: Optional[float]
    source_residual_max: float
    thresholds: dict
    flags: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("l2", "linf", "ebar", "big_b", "big_bh"):
            d[key] = {repr(k): v for k, v in d[key].items()}
        d["passed"] = self.passed
        return d


def trajectory_differences(times_a: Sequence[float], states_a, times_b: Sequence[float], states_b) -> list[dict]:
    """Per-sample difference diagnostics of two trajectories sharing a schedule."""
    if len(times_a) != len(times_b) or not np.allclose(times_a, times_b, rtol=0, atol=1e-12):
        raise ScheduleMismatch("trajectories must be sampled on identical time schedules")
    return [difference_diagnostics(a, b) for a, b in zip(states_a, states_b)]


def run_limit_study(
    data: InitialDataSpec,
    grid: Grid,
    eps_list: Sequence[float],
    cfg: SolverConfig,
    m: int = 5,
    sample_every: int = 1,
    slope_l2_min: float = 0.20,
    slope_linf_min: float = 0.075,
    source_checks: int = 3,
) -> LimitStudyReport:
    """Co-evolve the eps runs and the eps = 0 run on one fixed schedule."""
    if m < 5:
        raise ValueError(f"the limit study needs m >= 5, got {m}")
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 2 or any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps list must be strictly decreasing with at least two entries")
    ccfg = ConormalConfig(m=m)
    base = gen_initial_data(data, grid, ccfg)
    dt = cfg.dt if cfg.dt is not None else cfl_dt(base, cfg.cfl)
    n = max(1, math.ceil(cfg.t_end / dt - 1e-9)) if cfg.t_end > 0 else 0
    h = cfg.t_end / n if n else 0.0
    runs = [base.with_eps(e) for e in eps_list]
    ref = base.with_eps(0.0)

    times: list[float] = []
    series = {e: [] for e in eps_list}
    src_max = 0.0
    check_at = set(np.linspace(0, n, min(source_checks, n + 1)).round().astype(int).tolist()) if source_checks else set()

    def record(i: int):
        nonlocal src_max
        times.append(ref.t)
        for e, s in zip(eps_list, runs):
            series[e].append(difference_diagnostics(s, ref))
            if i in check_at:
                src_max = max(src_max, source_residual(s, ref)[1])

    record(0)
    for i in range(1, n + 1):
        ref = step(ref, cfg, h)
        runs = [step(s, cfg, h) for s in runs]
        if i % sample_every == 0 or i == n:
            record(i)

    sup_l2 = [max(d["l2"] for d in series[e]) for e in eps_list]
    sup_linf = [max(d["linf"] for d in series[e]) for e in eps_list]
    flags = []
    positive = [(e, a, b) for e, a, b in zip(eps_list, sup_l2, sup_linf) if e > 0 and a > 0 and b > 0]
    slope_l2 = slope_linf = None
    if len(positive) >= 2:
        xs = [p[0] for p in positive]
        slope_l2 = _loglog_slope(xs, [p[1] for p in positive])
        slope_linf = _loglog_slope(xs, [p[2] for p in positive])
    else:
        flags.append("differences vanish or eps list has fewer than two positive entries; slopes undefined")
    monotone = all(a >= b for a, b in zip(sup_l2, sup_l2[1:])) and all(
        a >= b for a, b in zip(sup_linf, sup_linf[1:])
    )
    verdicts = {
        "slope_l2": slope_l2 is not None and slope_l2 >= slope_l2_min,
        "slope_linf": slope_linf is not None and slope_linf >= slope_linf_min,
        "monotone": monotone,
    }

    def col(key):
        return {e: [d[key] for d in series[e]] for e in eps_list}

    return LimitStudyReport(
        eps=eps_list,
        times=times,
        l2=col("l2"),
        linf=col("linf"),
        ebar=col("ebar"),
        big_b=col("B"),
        big_bh=col("B_h"),
        sup_l2=sup_l2,
        sup_linf=sup_linf,
        slope_l2=slope_l2,
        slope_linf=slope_linf,
        source_residual_max=src_max,
        thresholds={
            "slope_l2_min": slope_l2_min,
            "slope_linf_min": slope_linf_min,
            "fit": "least squares of log sup difference on log eps over all positive eps",
            "dt": h,
        },
        flags=flags,
        verdicts=verdicts,
    )
