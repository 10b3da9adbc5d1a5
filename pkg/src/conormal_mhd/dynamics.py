"""Perturbation MHD dynamics around the background field e2 on the slip slab.

    d_t u + u.grad u - d_11 u - eps (d_22 + d_33) u + grad p = b.grad b + d_2 b
    d_t b + u.grad b - (d_11 + d_22) b - eps d_33 b       = b.grad u + d_2 u
    div u = div b = 0,  u3 = b3 = d3 u_h = d3 b_h = 0 at the walls

eps = 0 gives the limit system. The linear part (anisotropic diffusion and the
d_2 exchange) is integrated exactly per mode; the quadratic part is advanced
with an explicit Runge-Kutta scheme in integrating-factor (Lawson) form.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import romb, simpson

from .spectral import (
    VELOCITY_BASES,
    C,
    Grid,
    S,
    SpectralField,
    SpectralVectorField,
    batch_to_physical,
    batch_to_spectral,
    leray_project,
    vector_l2_norm_sq,
)


class CFLViolation(RuntimeError):
    def __init__(self, dt: float, required: float):
        super().__init__(f"dt={dt:.6g} exceeds the CFL bound; use dt <= {required:.6g}")
        self.dt = dt
        self.required = required


class NonFiniteField(RuntimeError):
    pass


class InsufficientSamples(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class State:
    u: SpectralVectorField
    b: SpectralVectorField
    t: float = 0.0
    eps: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @classmethod
    def zero(cls, grid: Grid, eps: float = 0.0, t: float = 0.0) -> "State":
        return cls(SpectralVectorField.zeros(grid), SpectralVectorField.zeros(grid), t, eps)

    def with_eps(self, eps: float) -> "State":
        return replace(self, eps=eps)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u.coef)) and np.all(np.isfinite(self.b.coef)))


@dataclass(frozen=True)
class SolverConfig:
    dt: Optional[float] = None  # None: CFL-adaptive
    cfl: float = 0.4
    t_end: float = 1.0
    rk_order: int = 3
    zero_horizontal_mean: bool = True
    nonlinear: bool = True

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.cfl < 1:
            raise ValueError("cfl must lie in (0, 1)")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.rk_order not in (2, 3):
            raise ValueError("rk_order must be 2 or 3")


# ---------------------------------------------------------------------------
# linear part


@dataclass(frozen=True)
class LinearModeMatrix:
    """Per-mode generator M = [[-nu_u, i k2], [i k2, -nu_b]] acting on (u_hat, b_hat)."""

    nu_u: np.ndarray
    nu_b: np.ndarray
    coupling: np.ndarray

    @classmethod
    def for_mode(cls, k1: float, k2: float, kappa: float, eps: float) -> "LinearModeMatrix":
        nu_u = k1**2 + eps * k2**2 + eps * kappa**2
        nu_b = k1**2 + k2**2 + eps * kappa**2
        return cls(np.asarray(nu_u, float), np.asarray(nu_b, float), np.asarray(k2, float))

    @classmethod
    def for_grid(cls, grid: Grid, eps: float) -> "LinearModeMatrix":
        nu_u = grid.k1**2 + eps * grid.k2**2 + eps * grid.kappa**2
        nu_b = grid.k1**2 + grid.k2**2 + eps * grid.kappa**2
        return cls(nu_u, nu_b, grid.dk2 + 0 * grid.kappa)

    def matrix(self) -> np.ndarray:
        ik = 1j * self.coupling
        return np.array([[-self.nu_u, ik], [ik, -self.nu_b]], dtype=complex)

    def eigenvalues(self) -> tuple[np.ndarray, np.ndarray]:
        half = -(self.nu_u + self.nu_b) / 2
        disc = np.sqrt(((self.nu_b - self.nu_u) / 2) ** 2 - self.coupling**2 + 0j)
        return half + disc, half - disc


def _sinhc_times(x: np.ndarray) -> np.ndarray:
    """sinh(x)/x for real x >= 0, accurate near zero."""
    small = x < 1e-2
    xs = np.where(small, 1.0, x)
    x2 = x * x
    series = 1 + x2 / 6 * (1 + x2 / 20 * (1 + x2 / 42))
    return np.where(small, series, np.sinh(np.minimum(xs, 700)) / xs)


def propagator_entries(nu_u, nu_b, k2, dt: float):
    """Entries (p11, p12, p22) of exp(dt M); p21 == p12.

    Writing M = -a I + N with a = (nu_u + nu_b)/2, delta = (nu_b - nu_u)/2 and
    N = [[delta, i k2], [i k2, -delta]], N^2 = q^2 I with q^2 = delta^2 - k2^2, so
    exp(dt M) = exp(-a dt) (cosh(q dt) I + dt sinhc(q dt) N). q^2 < 0 uses the
    trigonometric branch; q = 0 reduces to exp(-a dt)(I + dt N).
    """
    nu_u, nu_b, k2 = np.broadcast_arrays(*(np.asarray(x, float) for x in (nu_u, nu_b, k2)))
    a = (nu_u + nu_b) / 2
    delta = (nu_b - nu_u) / 2
    q2 = delta**2 - k2**2
    q = np.sqrt(np.abs(q2))
    x = q * dt
    decay = np.exp(-a * dt)
    real_branch = q2 >= 0
    # hyperbolic: exp(-a dt) cosh(q dt) written without overflow
    ch_h = 0.5 * (np.exp((q - a) * dt) + np.exp(-(q + a) * dt))
    big = x >= 1e-2
    qs = np.where(big, q, 1.0)
    sh_h = np.where(
        big,
        0.5 * (np.exp((q - a) * dt) - np.exp(-(q + a) * dt)) / qs,
        decay * dt * _sinhc_times(x),
    )
    ch_t = decay * np.cos(x)
    sh_t = decay * dt * np.sinc(x / np.pi)
    ch = np.where(real_branch, ch_h, ch_t)
    sh = np.where(real_branch, sh_h, sh_t)
    p11 = ch + sh * delta
    p22 = ch - sh * delta
    p12 = 1j * k2 * sh
    return p11, p12, p22


def linear_propagator(mode: tuple[float, float, float], eps: float, dt: float) -> np.ndarray:
    """Exact 2x2 matrix exp(dt M) for one mode (k1, k2, kappa3)."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    m = LinearModeMatrix.for_mode(*mode, eps)
    p11, p12, p22 = propagator_entries(m.nu_u, m.nu_b, m.coupling, dt)
    return np.array([[p11, p12], [p12, p22]], dtype=complex)


@functools.lru_cache(maxsize=64)
def _grid_propagator(grid: Grid, eps: float, dt: float):
    m = LinearModeMatrix.for_grid(grid, eps)
    return propagator_entries(m.nu_u, m.nu_b, m.coupling, dt)


def apply_propagator(grid: Grid, eps: float, dt: float, u: np.ndarray, b: np.ndarray):
    if dt == 0:
        return u, b
    p11, p12, p22 = _grid_propagator(grid, float(eps), float(dt))
    return p11 * u + p12 * b, p12 * u + p22 * b


# ---------------------------------------------------------------------------
# nonlinear part


_SYM = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
_ANTI = ((0, 1), (0, 2), (1, 2))
# vertical basis of a product of components i and j of a (C, C, S) field
_PAIR_BASES = [C if (i == 2) == (j == 2) else S for i, j in _SYM + _ANTI]


def physical_fields(u: SpectralVectorField, b: SpectralVectorField) -> np.ndarray:
    """(u1, u2, u3, b1, b2, b3) sampled on the grid."""
    return batch_to_physical(u.grid, np.concatenate([u.coef, b.coef]), VELOCITY_BASES * 2)


def _tensor_divergence(grid: Grid, tensor) -> np.ndarray:
    """Coefficients of sum_j d_j T_ij for a (C, C, S) valued result; tensor[i][j] is a coefficient array."""
    out = np.empty((3,) + grid.shape, dtype=complex)
    for i in range(3):
        acc = 1j * grid.dk1 * tensor[i][0] + 1j * grid.dk2 * tensor[i][1]
        # d3 of a Sine product is +kappa (to Cosine), of a Cosine product -kappa (to Sine)
        acc += (-grid.kappa if i == 2 else grid.kappa) * tensor[i][2]
        out[i] = acc
    return out


def quadratic_terms(u: SpectralVectorField, b: SpectralVectorField, phys: Optional[np.ndarray] = None):
    """Unprojected dealiased (-u.grad u + b.grad b, -u.grad b + b.grad u).

    Evaluated in divergence form, d_j(b_i b_j - u_i u_j) and d_j(u_i b_j - b_i u_j),
    which agrees with the advective form for divergence-free inputs.
    """
    grid = u.grid
    if phys is None:
        phys = physical_fields(u, b)
    up, bp = phys[:3], phys[3:]
    prods = [bp[i] * bp[j] - up[i] * up[j] for i, j in _SYM]
    prods += [up[i] * bp[j] - bp[i] * up[j] for i, j in _ANTI]
    hat = batch_to_spectral(grid, np.stack(prods), _PAIR_BASES)
    hat = np.where(grid.mask, hat, 0.0)
    sym = dict(zip(_SYM, hat[:6]))
    anti = dict(zip(_ANTI, hat[6:]))
    zero = np.zeros(grid.shape, dtype=complex)

    def A(i, j):
        return sym[(min(i, j), max(i, j))]

    def B(i, j):
        if i == j:
            return zero
        return anti[(i, j)] if i < j else -anti[(j, i)]

    fu = _tensor_divergence(grid, [[A(i, j) for j in range(3)] for i in range(3)])
    fb = _tensor_divergence(grid, [[B(i, j) for j in range(3)] for i in range(3)])
    fu = np.where(grid.mask, fu, 0.0)
    fb = np.where(grid.mask, fb, 0.0)
    return SpectralVectorField(grid, fu), SpectralVectorField(grid, fb)


def rhs_nonlinear(state: State, zero_horizontal_mean: bool = False, phys: Optional[np.ndarray] = None):
    """Projected quadratic tendencies (Nu, Nb)."""
    fu, fb = quadratic_terms(state.u, state.b, phys)
    nu, nb = leray_project(fu), leray_project(fb)
    if zero_horizontal_mean:
        nu.coef[:, 0, 0, :] = 0.0
        nb.coef[:, 0, 0, :] = 0.0
    return nu, nb


# ---------------------------------------------------------------------------
# time stepping


def _speed(phys: np.ndarray) -> float:
    up, bp = phys[:3], phys[3:]
    return float(np.sqrt((up**2).sum(0)).max() + np.sqrt((bp**2).sum(0)).max())


def max_speed(state: State) -> float:
    return _speed(physical_fields(state.u, state.b))


def _cfl_from_speed(grid: Grid, speed: float, cfl: float) -> float:
    return cfl * min(grid.dx) / max(1.0, speed)


def cfl_dt(state: State, cfl: float) -> float:
    return _cfl_from_speed(state.grid, max_speed(state), cfl)


def step(state: State, cfg: SolverConfig, dt: Optional[float] = None) -> State:
    """One integrating-factor Runge-Kutta step of size dt (default cfg.dt or CFL)."""
    if cfg.nonlinear:
        phys0 = physical_fields(state.u, state.b)
        bound = _cfl_from_speed(state.grid, _speed(phys0), cfg.cfl)
    else:
        # the propagator is exact, so linear runs carry no step restriction
        phys0, bound = None, math.inf
    if dt is None:
        dt = cfg.dt if cfg.dt is not None else bound
    if not math.isfinite(dt):
        raise ValueError("linear-only runs need an explicit dt")
    if dt > bound * (1 + 1e-12):
        raise CFLViolation(dt, bound)
    grid, eps = state.grid, state.eps
    zm = cfg.zero_horizontal_mean
    u0, b0 = state.u.coef, state.b.coef
    bases = state.u.bases

    def E(h, u, b):
        return apply_propagator(grid, eps, h, u, b)

    def N(u, b, phys=None):
        if not cfg.nonlinear:
            return 0.0, 0.0
        s = State(SpectralVectorField(grid, u, bases), SpectralVectorField(grid, b, bases), 0.0, eps)
        nu, nb = rhs_nonlinear(s, zm, phys)
        return nu.coef, nb.coef

    h = dt
    if cfg.rk_order == 3:
        # Heun's third-order tableau: c = (0, 1/3, 2/3), b = (1/4, 0, 3/4)
        k1u, k1b = N(u0, b0, phys0)
        u2, b2 = E(h / 3, u0 + h / 3 * k1u, b0 + h / 3 * k1b)
        k2u, k2b = N(u2, b2)
        eu, eb = E(2 * h / 3, u0, b0)
        fu, fb = E(h / 3, k2u, k2b) if cfg.nonlinear else (0.0, 0.0)
        u3, b3 = eu + 2 * h / 3 * fu, eb + 2 * h / 3 * fb
        k3u, k3b = N(u3, b3)
        au, ab = E(h, u0 + h / 4 * k1u, b0 + h / 4 * k1b)
        cu, cb = E(h / 3, k3u, k3b) if cfg.nonlinear else (0.0, 0.0)
        un, bn = au + 3 * h / 4 * cu, ab + 3 * h / 4 * cb
    else:
        k1u, k1b = N(u0, b0, phys0)
        u2, b2 = E(h, u0 + h * k1u, b0 + h * k1b)
        k2u, k2b = N(u2, b2)
        au, ab = E(h, u0 + h / 2 * k1u, b0 + h / 2 * k1b)
        un, bn = au + h / 2 * k2u, ab + h / 2 * k2b

    un = np.array(un, dtype=complex, copy=True)
    bn = np.array(bn, dtype=complex, copy=True)
    if zm:
        un[:, 0, 0, :] = 0.0
        bn[:, 0, 0, :] = 0.0
    return State(SpectralVectorField(grid, un, bases), SpectralVectorField(grid, bn, bases), state.t + dt, eps)


@dataclass
class Trajectory:
    final: State
    times: list = field(default_factory=list)
    observations: list = field(default_factory=list)
    steps: int = 0


def evolve(
    state: State,
    cfg: SolverConfig,
    callback_every: int = 1,
    observer: Optional[Callable[[State], object]] = None,
) -> Trajectory:
    """Advance to t + cfg.t_end, calling observer on the initial state, every
    callback_every steps, and on the final state."""
    if callback_every < 1:
        raise ValueError("callback_every must be a positive integer")
    traj = Trajectory(final=state)

    def observe(s: State):
        if observer is not None:
            traj.times.append(s.t)
            traj.observations.append(observer(s))

    observe(state)
    if cfg.t_end == 0:
        return traj
    t_stop = state.t + cfg.t_end
    if cfg.dt is not None:
        n = max(1, math.ceil(cfg.t_end / cfg.dt - 1e-9))
        schedule = [cfg.t_end / n] * n
    else:
        schedule = None

    s = state
    i = 0
    while True:
        if schedule is not None:
            if i == len(schedule):
                break
            dt = schedule[i]
        else:
            remaining = t_stop - s.t
            if remaining <= 1e-12 * max(1.0, t_stop):
                break
            dt = min(cfl_dt(s, cfg.cfl), remaining) if cfg.nonlinear else remaining
        s = step(s, cfg, dt)
        i += 1
        if not s.is_finite():
            raise NonFiniteField(f"non-finite coefficients at t={s.t:.6g} after step {i}")
        last = (schedule is not None and i == len(schedule)) or (
            schedule is None and t_stop - s.t <= 1e-12 * max(1.0, t_stop)
        )
        if i % callback_every == 0 or last:
            observe(s)
    traj.final = s
    traj.steps = i
    return traj


# ---------------------------------------------------------------------------
# closed-form linear solution (oracle for the propagator)


def linear_mode_solution(nu_u, nu_b, k2, x0, y0, t: float):
    """(u_hat, b_hat)(t) of the linear 2x2 system from its eigen-decomposition.

    Eigenvalues are the roots of lam^2 + (nu_u + nu_b) lam + nu_u nu_b + k2^2 = 0,
    eigenvectors (i k2, lam + nu_u). Uncoupled modes (k2 = 0) decay separately
    and coincident roots use the Jordan form.
    """
    nu_u, nu_b, k2 = np.broadcast_arrays(*(np.asarray(a, float) for a in (nu_u, nu_b, k2)))
    x0 = np.asarray(x0, complex)
    y0 = np.asarray(y0, complex)
    shape = np.broadcast_shapes(nu_u.shape, x0.shape, y0.shape)
    nu_u, nu_b, k2, x0, y0 = (np.broadcast_to(a, shape) for a in (nu_u, nu_b, k2, x0, y0))
    x = np.empty(shape, complex)
    y = np.empty(shape, complex)

    half = -(nu_u + nu_b) / 2
    disc = ((nu_b - nu_u) / 2) ** 2 - k2**2
    scale = np.maximum(np.abs(half) ** 2, 1.0)
    uncoupled = k2 == 0
    jordan = ~uncoupled & (np.abs(disc) <= 1e-13 * scale)
    generic = ~uncoupled & ~jordan

    x[uncoupled] = np.exp(-nu_u[uncoupled] * t) * x0[uncoupled]
    y[uncoupled] = np.exp(-nu_b[uncoupled] * t) * y0[uncoupled]

    lam = half[jordan]
    e = np.exp(lam * t)
    a, b, c, d = -nu_u[jordan] - lam, 1j * k2[jordan], 1j * k2[jordan], -nu_b[jordan] - lam
    x[jordan] = e * (x0[jordan] + t * (a * x0[jordan] + b * y0[jordan]))
    y[jordan] = e * (y0[jordan] + t * (c * x0[jordan] + d * y0[jordan]))

    root = np.sqrt(disc[generic] + 0j)
    lp, lm = half[generic] + root, half[generic] - root
    ik = 1j * k2[generic]
    vp = (ik, lp + nu_u[generic])
    vm = (ik, lm + nu_u[generic])
    det = vp[0] * vm[1] - vm[0] * vp[1]
    cp = (x0[generic] * vm[1] - vm[0] * y0[generic]) / det
    cm = (vp[0] * y0[generic] - x0[generic] * vp[1]) / det
    ep, em = np.exp(lp * t), np.exp(lm * t)
    x[generic] = cp * ep * vp[0] + cm * em * vm[0]
    y[generic] = cp * ep * vp[1] + cm * em * vm[1]
    return x, y


def verify_linear(grid: Grid, eps: float, t_end: float = 10.0, dt: float = 0.5, seed: int = 0) -> dict:
    """Evolve random data with nonlinear terms off and compare every retained mode
    to the closed-form solution at each step; returns the worst relative error."""
    rng = np.random.default_rng(seed)
    shape = (3,) + grid.shape
    u = SpectralVectorField(grid, (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * grid.mask)
    b = SpectralVectorField(grid, (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * grid.mask)
    state = State(u, b, 0.0, eps)
    cfg = SolverConfig(dt=dt, t_end=t_end, nonlinear=False, zero_horizontal_mean=False)
    traj = evolve(state, cfg, 1, lambda s: (s.u.coef.copy(), s.b.coef.copy()))
    m = LinearModeMatrix.for_grid(grid, eps)
    nu_u = np.broadcast_to(m.nu_u, grid.shape)
    nu_b = np.broadcast_to(m.nu_b, grid.shape)
    k2 = np.broadcast_to(m.coupling, grid.shape)
    keep = grid.mask
    worst = 0.0
    for t, (uc, bc) in zip(traj.times, traj.observations):
        for i in range(3):
            x, y = linear_mode_solution(nu_u[keep], nu_b[keep], k2[keep], u.coef[i][keep], b.coef[i][keep], t)
            num = np.sqrt(np.abs(uc[i][keep] - x) ** 2 + np.abs(bc[i][keep] - y) ** 2)
            den = np.sqrt(np.abs(x) ** 2 + np.abs(y) ** 2)
            live = den > 1e-300
            if np.any(live):
                worst = max(worst, float((num[live] / den[live]).max()))
    return {"max_rel_error": worst, "modes": int(keep.sum()) * 3, "samples": len(traj.times), "t_end": t_end, "dt": dt}


# ---------------------------------------------------------------------------
# pressure and diagnostics


def _div_multiplier_apply(grid: Grid, v: np.ndarray) -> np.ndarray:
    return 1j * grid.dk1 * v[0] + 1j * grid.dk2 * v[1] + grid.kappa * v[2]


def recover_pressure(state: State) -> SpectralField:
    """Total pressure from lap p = div(-u.grad u + b.grad b + d_2 b), zero mean gauge."""
    grid = state.grid
    fu, _ = quadratic_terms(state.u, state.b)
    forcing = fu.coef + 1j * grid.dk2 * state.b.coef
    div = _div_multiplier_apply(grid, forcing)
    k2tot = grid.dk1**2 + grid.dk2**2 + grid.kappa**2
    p = np.zeros(grid.shape, dtype=complex)
    np.divide(-div, k2tot, out=p, where=np.broadcast_to(k2tot > 0, grid.shape))
    return SpectralField(grid, p, C)


def linear_tendency(state: State):
    """Diffusion and d_2 exchange terms of the right-hand side."""
    g = state.grid
    m = LinearModeMatrix.for_grid(g, state.eps)
    du = -m.nu_u * state.u.coef + 1j * m.coupling * state.b.coef
    db = -m.nu_b * state.b.coef + 1j * m.coupling * state.u.coef
    return du, db


def tendency(state: State):
    """Full time derivative (d_t u, d_t b) as coefficient arrays."""
    nu, nb = rhs_nonlinear(state)
    lu, lb = linear_tendency(state)
    return nu.coef + lu, nb.coef + lb


def l2_energy(state: State) -> float:
    return 0.5 * (vector_l2_norm_sq(state.u) + vector_l2_norm_sq(state.b))


def l2_dissipation(state: State) -> float:
    """||d1 u||^2 + ||grad_h b||^2 + eps ||(d2 u, d3 u, d3 b)||^2."""
    g = state.grid
    from .conormal import weighted_sq  # local import keeps modules acyclic at load

    u, b = state.u, state.b
    total = weighted_sq(u, g.k1**2) + weighted_sq(b, g.kh2)
    if state.eps:
        total += state.eps * (weighted_sq(u, g.k2**2 + g.kappa**2) + weighted_sq(b, g.kappa**2))
    return total


def energy_balance_residual(times, energies, dissipations) -> float:
    """|dE/dt + <D>| / max(<D>, eps_mach) over a sample window.

    dE/dt is the window difference quotient and <D> the window mean of the
    dissipation. On a uniform grid of 2**k + 1 samples the mean uses Romberg
    extrapolation, so the quadrature error sits far below the integrator's
    energy error; otherwise Simpson's rule (trapezoid for two samples).
    """
    t = np.asarray(times, float)
    e = np.asarray(energies, float)
    d = np.asarray(dissipations, float)
    if t.size < 2:
        raise InsufficientSamples("energy balance needs two or more samples")
    span = t[-1] - t[0]
    if span <= 0:
        raise InsufficientSamples("samples must span a positive time interval")
    n = t.size - 1
    steps = np.diff(t)
    uniform = np.allclose(steps, span / n, rtol=1e-9, atol=0.0)
    if n >= 2 and n & (n - 1) == 0 and uniform:
        integral = romb(d, dx=span / n)
    elif t.size >= 3:
        integral = simpson(d, x=t)
    else:
        integral = 0.5 * (d[0] + d[1]) * span
    mean_d = integral / span
    de = (e[-1] - e[0]) / span
    return float(abs(de + mean_d) / max(mean_d, np.finfo(float).eps))
