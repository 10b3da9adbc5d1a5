"""Conormal derivatives, the energy/dissipation functional hierarchy, and probes.

Conormal fields: Z1 = d1, Z2 = d2, Z3 = phi(x3) d3 with phi(0) = 0. Z1 and Z2
are Fourier multipliers and commute with Z3 (phi depends on x3 only), so

    ||Z^alpha f||^2 summed over |alpha| <= k
        = sum_{a3 <= k} sum_modes W_{k - a3}(k_h) |(Z3^{a3} f)^|^2

with W_r(k_h) = sum_{a1 + a2 <= r} k1^{2 a1} k2^{2 a2}. Every functional below
is assembled from such weighted sums over Z3-chains; all values are squared
norms.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, Union

import numpy as np

from .spectral import (
    VELOCITY_BASES,
    Grid,
    SpectralField,
    SpectralVectorField,
    derivative,
    lambda_h_pow,
    multiply,
    to_physical,
    vertical_forward,
    vertical_inverse,
)


class OrderExceeded(ValueError):
    pass


class PhiChoice(enum.Enum):
    HALF_SPACE = "half-space"  # x3 / (1 + x3)
    SLAB = "slab"  # (L3 / pi) sin(pi x3 / L3)


@dataclass(frozen=True)
class ConormalConfig:
    m: int = 4
    s: float = 0.95
    sigma: float = 0.92
    phi_choice: PhiChoice = PhiChoice.SLAB

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 4:
            raise ValueError(f"m must be an integer >= 4, got {self.m}")
        if not 0.9 < self.sigma < self.s < 1:
            raise ValueError(f"need 9/10 < sigma < s < 1, got sigma={self.sigma}, s={self.s}")


class MultiIndex(NamedTuple):
    a1: int = 0
    a2: int = 0
    a3: int = 0

    @property
    def order(self) -> int:
        return self.a1 + self.a2 + self.a3

    @property
    def horizontal(self) -> "MultiIndex":
        return MultiIndex(self.a1, self.a2, 0)


def multi_indices(k: int, tangential: bool = False) -> list[MultiIndex]:
    """All multi-indices with |alpha| <= k (alpha3 = 0 when tangential)."""
    top3 = 0 if tangential else k
    return [
        MultiIndex(a1, a2, a3)
        for a3 in range(top3 + 1)
        for a2 in range(k + 1 - a3)
        for a1 in range(k + 1 - a3 - a2)
    ]


def weight_phi(x3, choice: PhiChoice, L3: float):
    x3 = np.asarray(x3, float)
    if np.any(x3 < -1e-14) or np.any(x3 > L3 * (1 + 1e-14)):
        raise ValueError(f"x3 outside [0, {L3}]")
    if choice is PhiChoice.HALF_SPACE:
        return x3 / (1 + x3)
    return (L3 / np.pi) * np.sin(np.pi * x3 / L3)


# ---------------------------------------------------------------------------
# Z operators


FieldLike = Union[SpectralField, SpectralVectorField]


def _z3_coef(coef: np.ndarray, basis, grid: Grid, phi: np.ndarray) -> np.ndarray:
    d = derivative(SpectralField(grid, coef, basis), 3)
    vals = vertical_inverse(d.coef, d.basis)  # horizontal stays spectral
    return vertical_forward(vals * phi, basis)


def z3(f: SpectralField, choice: PhiChoice = PhiChoice.SLAB) -> SpectralField:
    g = f.grid
    phi = weight_phi(g.x3, choice, g.spec.L3)
    return SpectralField(g, _z3_coef(f.coef, f.basis, g, phi), f.basis)


def conormal_Z(f: SpectralField, alpha: Sequence[int], choice: PhiChoice = PhiChoice.SLAB, max_order: int = 8):
    """Z1^a1 Z2^a2 Z3^a3 f."""
    a1, a2, a3 = (int(a) for a in alpha)
    if min(a1, a2, a3) < 0:
        raise ValueError("multi-index entries must be nonnegative")
    if a1 + a2 + a3 > max_order:
        raise OrderExceeded(f"|alpha| = {a1 + a2 + a3} exceeds supported order {max_order}")
    out = f
    for _ in range(a3):
        out = z3(out, choice)
    for _ in range(a2):
        out = derivative(out, 2)
    for _ in range(a1):
        out = derivative(out, 1)
    return out


def z3_chain(coef: np.ndarray, bases, grid: Grid, n: int, phi: np.ndarray) -> list[np.ndarray]:
    """[f, Z3 f, ..., Z3^n f] for a stacked (3, ...) vector coefficient array."""
    chain = [coef]
    cur = coef
    for _ in range(n):
        cur = np.stack([_z3_coef(cur[i], bases[i], grid, phi) for i in range(cur.shape[0])])
        chain.append(cur)
    return chain


def horizontal_weight(grid: Grid, r: int) -> np.ndarray:
    """W_r = sum over a1 + a2 <= r of k1^(2 a1) k2^(2 a2)."""
    if r < 0:
        return np.zeros((grid.spec.N1, grid.spec.N2, 1))
    a = grid.dk1**2
    b = grid.dk2**2
    total = np.zeros((grid.spec.N1, grid.spec.N2, 1))
    for a1 in range(r + 1):
        for a2 in range(r + 1 - a1):
            total = total + a**a1 * b**a2
    return total


def _vec_weights(grid: Grid, bases) -> np.ndarray:
    return np.stack([np.broadcast_to(grid.mode_weight(b), (1, 1, grid.spec.N3)) for b in bases])


def _as_stack(v: FieldLike):
    if isinstance(v, SpectralField):
        return v.coef[None], (v.basis,)
    return v.coef, v.bases


def weighted_sq(v: FieldLike, weight) -> float:
    """sum over components and modes of weight * |c|^2 * (L2 mode weight)."""
    coef, bases = _as_stack(v)
    w = _vec_weights(v.grid, bases)
    return float(np.sum(np.abs(coef) ** 2 * w * weight))


def weighted_inner(a: FieldLike, b: FieldLike, weight) -> float:
    ca, ba = _as_stack(a)
    cb, bb = _as_stack(b)
    if tuple(ba) != tuple(bb):
        raise ValueError("basis mismatch in inner product")
    w = _vec_weights(a.grid, ba)
    return float(np.real(np.sum(np.conj(ca) * cb * w * weight)))


def norm_tan(f: FieldLike, k: int, extra=1.0) -> float:
    """Squared H^k_tan norm (0 for k < 0)."""
    if k < 0:
        return 0.0
    return weighted_sq(f, horizontal_weight(f.grid, k) * extra)


def norm_co(f: FieldLike, k: int, choice: PhiChoice = PhiChoice.SLAB, extra=1.0) -> float:
    """Squared H^k_co norm (0 for k < 0)."""
    if k < 0:
        return 0.0
    coef, bases = _as_stack(f)
    g = f.grid
    phi = weight_phi(g.x3, choice, g.spec.L3)
    chain = z3_chain(coef, bases, g, k, phi)
    w = _vec_weights(g, bases)
    return float(
        sum(np.sum(np.abs(c) ** 2 * w * horizontal_weight(g, k - a3) * extra) for a3, c in enumerate(chain))
    )


# ---------------------------------------------------------------------------
# vorticity


def curl(v: SpectralVectorField) -> SpectralVectorField:
    """Spectral curl; (C, C, S) input gives (S, S, C) output."""
    if v.bases != VELOCITY_BASES:
        raise ValueError("curl expects (Cosine, Cosine, Sine) components")
    v1, v2, v3 = v.components()
    w1 = derivative(v3, 2) - derivative(v2, 3)
    w2 = derivative(v1, 3) - derivative(v3, 1)
    w3 = derivative(v2, 1) - derivative(v1, 2)
    return SpectralVectorField.from_components([w1, w2, w3])


def d3(v: SpectralVectorField) -> SpectralVectorField:
    return SpectralVectorField.from_components([derivative(c, 3) for c in v.components()])


# ---------------------------------------------------------------------------
# functionals


class _Chains:
    """Lazily built derived fields and Z3-chains for one state.

    Field names: "u", "b", "wu", "wb" (vorticities), each optionally followed
    by "3" per vertical derivative, e.g. "u33" = d33 u.
    """

    def __init__(self, state, choice: PhiChoice = PhiChoice.SLAB):
        self.grid = state.grid
        self.choice = choice
        self._fields = {"u": state.u, "b": state.b}
        self._chains: dict[str, list] = {}

    @property
    def phi(self) -> np.ndarray:
        return weight_phi(self.grid.x3, self.choice, self.grid.spec.L3)

    def field(self, name: str) -> SpectralVectorField:
        f = self._fields.get(name)
        if f is None:
            if name in ("wu", "wb"):
                f = curl(self.field(name[1]))
            elif name.endswith("3"):
                f = d3(self.field(name[:-1]))
            else:
                raise KeyError(name)
            self._fields[name] = f
        return f

    def chain(self, name: str, n: int) -> list:
        have = self._chains.get(name)
        if have is not None and len(have) > n:
            return have
        f = self.field(name)
        if have is None:
            have = z3_chain(f.coef, f.bases, self.grid, n, self.phi)
        else:
            more = z3_chain(have[-1], f.bases, self.grid, n + 1 - len(have), self.phi)
            have = have + more[1:]
        self._chains[name] = have
        return have

    def co(self, name: str, k: int, extra=1.0) -> float:
        if k < 0:
            return 0.0
        f = self.field(name)
        w = _vec_weights(self.grid, f.bases)
        chain = self.chain(name, k)
        return float(
            sum(
                np.sum(np.abs(chain[a3]) ** 2 * w * horizontal_weight(self.grid, k - a3) * extra)
                for a3 in range(k + 1)
            )
        )

    def tan(self, name: str, k: int, extra=1.0) -> float:
        return norm_tan(self.field(name), k, extra)


def energy_tan(ch: _Chains, k: int) -> float:
    return ch.tan("u", k) + ch.tan("b", k) + ch.tan("wu", k - 1) + ch.tan("wb", k - 1)


def energy_k(ch: _Chains, k: int) -> float:
    return energy_tan(ch, k) + ch.co("wu3", k - 2) + ch.co("wb3", k - 2)


def dissipation_tan(ch: _Chains, k: int) -> float:
    g = ch.grid
    k1, kh, k2 = g.dk1**2, g.dk1**2 + g.dk2**2, g.dk2**2
    return (
        ch.tan("u", k, k1)
        + ch.tan("b", k, kh)
        + ch.tan("wu", k - 1, k1)
        + ch.tan("wb", k - 1, kh)
        + ch.tan("u", k - 1, k2)
        + ch.tan("wu", k - 2, k2)
    )


def dissipation_k(ch: _Chains, k: int) -> float:
    g = ch.grid
    k1, kh, k2 = g.dk1**2, g.dk1**2 + g.dk2**2, g.dk2**2
    return (
        dissipation_tan(ch, k)
        + ch.co("wu3", k - 3, k2)
        + ch.co("wu3", k - 2, k1)
        + ch.co("wb3", k - 2, kh)
    )


def _neg_weight(grid: Grid, s: float) -> np.ndarray:
    kh2 = grid.kh2
    out = np.zeros_like(kh2)
    np.power(kh2, -s, out=out, where=kh2 > 0)
    return out


def full_energy(ch: _Chains, m: int, s: float) -> float:
    lam = _neg_weight(ch.grid, s)
    total = 0.0
    for v in ("u", "b"):
        total += ch.co(v, m) + ch.co(v + "3", m - 1) + ch.co(v + "33", m - 2)
        total += ch.tan(v, m - 1, lam) + ch.tan(v + "3", m - 2, lam)
    return total


def full_dissipation(ch: _Chains, m: int, eps: float) -> float:
    g = ch.grid
    k1, kh, k2 = g.dk1**2, g.dk1**2 + g.dk2**2, g.dk2**2
    total = (
        ch.co("u", m, k1)
        + ch.co("u3", m - 1, k1)
        + ch.co("u33", m - 2, k1)
        + ch.co("b", m, kh)
        + ch.co("b3", m - 1, kh)
        + ch.co("b33", m - 2, kh)
        + ch.co("u", m - 1, k2)
        + ch.co("u3", m - 2, k2)
        + ch.co("u33", m - 3, k2)
    )
    if eps:
        total += eps * (
            ch.co("u", m, k2)
            + ch.co("u3", m)
            + ch.co("u3", m - 1, k2)
            + ch.co("u33", m - 1)
            + ch.co("u33", m - 2, k2)
            + ch.co("u333", m - 2)
        )
        total += eps * (ch.co("b3", m) + ch.co("b33", m - 1) + ch.co("b333", m - 2))
    return total


def cross_functionals(ch: _Chains, m: int) -> tuple[float, float, float]:
    g = ch.grid
    ik2 = 1j * g.dk2
    u, b, wu, wb = (ch.field(n) for n in ("u", "b", "wu", "wb"))
    # sum_{|a_h| <= m-2} int d2 Z b . Z u
    phi1 = weighted_inner(u, SpectralVectorField(g, ik2 * b.coef, b.bases), horizontal_weight(g, m - 2))
    phi2 = weighted_inner(wu, SpectralVectorField(g, ik2 * wb.coef, wb.bases), horizontal_weight(g, m - 3))
    # sum_{|a| <= m-3} int d3 Z^a wb . d23 Z^a wu
    phi3 = 0.0
    cu = ch.chain("wu", max(m - 3, 0))
    cb = ch.chain("wb", max(m - 3, 0))
    for a3 in range(m - 2):
        zb = d3(SpectralVectorField(g, cb[a3], wb.bases))
        zu = d3(SpectralVectorField(g, cu[a3], wu.bases))
        zu = SpectralVectorField(g, ik2 * zu.coef, zu.bases)
        phi3 += weighted_inner(zb, zu, horizontal_weight(g, m - 3 - a3))
    return phi1, phi2, phi3


@dataclass
class EnergyLedger:
    t: float
    E_tan: dict
    E: dict
    D_tan: dict
    D: dict
    E_full: float
    D_full: float
    neg_u_b: float
    neg_w: float
    cross_phi1: float
    cross_phi2: float
    cross_phi3: float
    energy_L2: float
    dissipation_L2: float
    m: int = 4
    eps: float = 0.0

    def row(self) -> dict:
        m = self.m
        return {
            "t": self.t,
            "eps": self.eps,
            "E_tan_m1": self.E_tan[m - 1],
            "E_tan_m": self.E_tan[m],
            "E_m1": self.E[m - 1],
            "E_m": self.E[m],
            "D_tan_m1": self.D_tan[m - 1],
            "D_tan_m": self.D_tan[m],
            "D_m1": self.D[m - 1],
            "D_m": self.D[m],
            "E_full": self.E_full,
            "D_full": self.D_full,
            "neg_u_b": self.neg_u_b,
            "neg_w": self.neg_w,
            "cross_phi1": self.cross_phi1,
            "cross_phi2": self.cross_phi2,
            "cross_phi3": self.cross_phi3,
            "energy_L2": self.energy_L2,
            "dissipation_L2": self.dissipation_L2,
        }

    def values(self) -> list[float]:
        return [v for k, v in self.row().items() if k not in ("t", "eps")]


LEDGER_COLUMNS = list(
    EnergyLedger(0, {3: 0, 4: 0}, {3: 0, 4: 0}, {3: 0, 4: 0}, {3: 0, 4: 0}, 0, 0, 0, 0, 0, 0, 0, 0, 0).row()
)


def vertical_tail_fraction(state, m: int) -> float:
    """Share of the order-m weighted spectrum in vertical modes an m-fold Z3 chain would alias."""
    g = state.grid
    cutoff = g.M - 1 - m
    weight = (1 + g.dk1**2 + g.dk2**2 + g.kappa**2) ** m
    total = tail = 0.0
    j = np.arange(g.spec.N3)
    for v in (state.u, state.b):
        e = np.abs(v.coef) ** 2 * weight
        total += e.sum()
        tail += e[..., j > cutoff].sum()
    return float(tail / total) if total > 0 else 0.0


def ledger(state, cfg: ConormalConfig, *, allow_underresolved: bool = False, full: bool = True) -> EnergyLedger:
    """All monitored functionals of one state. full=False skips E_full and D_full (set to nan)."""
    m = cfg.m
    g = state.grid
    margin = g.M - 1 - g.retained_vertical_max()
    if margin < m and cfg.phi_choice is PhiChoice.SLAB:
        frac = vertical_tail_fraction(state, m)
        if frac > 0.01 and not allow_underresolved:
            raise OrderExceeded(
                f"m={m} Z3 derivatives under-resolved on N3={g.spec.N3}: {frac:.1%} of the "
                f"weighted spectrum lies in aliased vertical modes"
            )
        warnings.warn(f"vertical dealias margin {margin} < m={m}; conormal norms may alias", RuntimeWarning)
    from .dynamics import l2_dissipation, l2_energy

    ch = _Chains(state, cfg.phi_choice)
    lam = _neg_weight(g, cfg.s)
    ks = (m - 1, m)
    phi1, phi2, phi3 = cross_functionals(ch, m)
    return EnergyLedger(
        t=state.t,
        E_tan={k: energy_tan(ch, k) for k in ks},
        E={k: energy_k(ch, k) for k in ks},
        D_tan={k: dissipation_tan(ch, k) for k in ks},
        D={k: dissipation_k(ch, k) for k in ks},
        E_full=full_energy(ch, m, cfg.s) if full else math.nan,
        D_full=full_dissipation(ch, m, state.eps) if full else math.nan,
        neg_u_b=ch.tan("u", m - 1, lam) + ch.tan("b", m - 1, lam),
        neg_w=ch.tan("wu", m - 2, lam) + ch.tan("wb", m - 2, lam),
        cross_phi1=phi1,
        cross_phi2=phi2,
        cross_phi3=phi3,
        energy_L2=l2_energy(state),
        dissipation_L2=l2_dissipation(state),
        m=m,
        eps=state.eps,
    )


def tangential_pair(state, k: int) -> tuple[float, float]:
    """(E_tan^k, D_tan^k); needs no Z3 chains, so cheap enough for every step."""
    ch = _Chains(state)
    return energy_tan(ch, k), dissipation_tan(ch, k)


def functionals(state, k: int, choice: PhiChoice = PhiChoice.SLAB) -> dict:
    """E_tan^k, E^k, D_tan^k, D^k at an arbitrary order k (used by the order sweeps and oracles)."""
    ch = _Chains(state, choice)
    return {
        "E_tan": energy_tan(ch, k),
        "E": energy_k(ch, k),
        "D_tan": dissipation_tan(ch, k),
        "D": dissipation_k(ch, k),
    }


def full_functionals(state, m: int, s: float, choice: PhiChoice = PhiChoice.SLAB) -> tuple[float, float]:
    ch = _Chains(state, choice)
    return full_energy(ch, m, s), full_dissipation(ch, m, state.eps)


# ---------------------------------------------------------------------------
# identity and inequality probes


def _phys_grad(f: SpectralField) -> np.ndarray:
    return np.stack([to_physical(derivative(f, a)) for a in (1, 2, 3)])


def curl_identity_residual(u: SpectralVectorField, b: SpectralVectorField) -> float:
    """Max relative pointwise residual of the vorticity cross-term identities.

    Checks curl(u.grad b) - u.grad(curl b) = sum_l grad u_l x d_l b (and with u, b
    swapped), then the divergence-free rewrites of grad u3 x d3 b and grad b3 x d3 u.
    Products are not truncated, so inputs must be band-limited to half the grid.
    """
    up = np.stack([to_physical(c) for c in u.components()])
    bp = np.stack([to_physical(c) for c in b.components()])
    gu = np.stack([_phys_grad(c) for c in u.components()])  # gu[l, j] = d_j u_l
    gb = np.stack([_phys_grad(c) for c in b.components()])
    if not np.any(up) or not np.any(bp):
        return 0.0
    res = 0.0
    for a, ap, ga, bb, gbb in ((u, up, gu, b, gb), (b, bp, gb, u, gu)):
        # left side: curl of the spectral product minus advection of the curl
        adv = [
            multiply(a[0], derivative(bb[i], 1), dealiased=False)
            + multiply(a[1], derivative(bb[i], 2), dealiased=False)
            + multiply(a[2], derivative(bb[i], 3), dealiased=False)
            for i in range(3)
        ]
        lhs = to_phys_vec(curl(SpectralVectorField.from_components(adv)))
        wb = curl(bb)
        gw = np.stack([_phys_grad(c) for c in wb.components()])
        lhs = lhs - np.einsum("lxyz,ilxyz->ixyz", ap, gw)
        rhs = sum(np.cross(ga[l], gbb[:, l], axis=0) for l in range(3))
        scale = max(np.abs(rhs).max(), np.abs(lhs).max(), 1e-300)
        res = max(res, float(np.abs(lhs - rhs).max() / scale))

    def substituted(ga, gbb):
        # grad a3 x d3 c with d3 a3 = -div_h a_h and d3 c3 = -div_h c_h
        div_a = ga[0, 0] + ga[1, 1]
        div_c = gbb[0, 0] + gbb[1, 1]
        d3c = gbb[:, 2]
        direct = np.cross(ga[2], d3c, axis=0)
        sub = np.stack(
            [
                -ga[2, 1] * div_c + div_a * d3c[1],
                -div_a * d3c[0] + ga[2, 0] * div_c,
                ga[2, 0] * d3c[1] - ga[2, 1] * d3c[0],
            ]
        )
        return direct, sub

    for ga, gbb in ((gu, gb), (gb, gu)):
        direct, sub = substituted(ga, gbb)
        scale = max(np.abs(direct).max(), 1e-300)
        res = max(res, float(np.abs(direct - sub).max() / scale))
    return res


def to_phys_vec(v: SpectralVectorField) -> np.ndarray:
    return np.stack([to_physical(c) for c in v.components()])


@dataclass
class ProbeReport:
    ratios: dict = field(default_factory=dict)  # name -> LHS/RHS or None when degenerate
    lhs: dict = field(default_factory=dict)
    rhs: dict = field(default_factory=dict)

    @property
    def degenerate(self) -> list[str]:
        return [k for k, v in self.ratios.items() if v is None]

    def all_finite(self) -> bool:
        return all(v is not None and math.isfinite(v) for v in self.ratios.values())


def _record(rep: ProbeReport, name: str, lhs: float, rhs: float) -> None:
    rep.lhs[name] = lhs
    rep.rhs[name] = rhs
    rep.ratios[name] = lhs / rhs if rhs > 0 and math.isfinite(rhs) else None


def sobolev_probe(
    f: SpectralField,
    g: SpectralField,
    h: SpectralField,
    s: float = 0.95,
    ijk: tuple[int, int, int] = (1, 2, 3),
    choice: PhiChoice = PhiChoice.SLAB,
) -> ProbeReport:
    """Empirical constants (LHS/RHS) of the anisotropic Sobolev inequalities and
    Hardy-Littlewood-Sobolev with q = 2, p = 2/(1+s)."""
    from .spectral import l2_norm_sq

    grid = f.grid
    rep = ProbeReport()

    def n(x: SpectralField, *axes) -> float:
        for a in axes:
            x = derivative(x, a)
        return math.sqrt(max(l2_norm_sq(x), 0.0))

    fp, gp, hp = to_physical(f), to_physical(g), to_physical(h)
    w3 = np.full(grid.spec.N3, grid.dx[2])
    w3[0] = w3[-1] = grid.dx[2] / 2
    cell = grid.dx[0] * grid.dx[1]

    # 1: L^inf by eight L2 factors
    prod = 1.0
    for axes in ((), (1,), (2,), (1, 2), (3,), (1, 3), (2, 3), (1, 2, 3)):
        prod *= n(f, *axes) ** 0.125
    _record(rep, "sobolev_1", float(np.abs(fp).max()), prod)

    trilinear = float(np.sum(np.abs(fp * gp * hp) * w3) * cell)
    i, j, k = ijk
    rhs2 = (
        n(f)
        * n(g) ** 0.5
        * n(g, i) ** 0.5
        * n(h) ** 0.25
        * n(h, j) ** 0.25
        * n(h, k) ** 0.25
        * n(h, j, k) ** 0.25
    )
    _record(rep, "sobolev_2", trilinear, rhs2)
    rhs3 = (n(f) * n(f, 1) * n(g) * n(g, 2) * n(h) * n(h, 3)) ** 0.5
    _record(rep, "sobolev_3", trilinear, rhs3)

    z1 = z3(f, choice)
    zzz = z3(z3(z1, choice), choice)
    nf = n(f)
    nz3 = math.sqrt(l2_norm_sq(zzz))
    rhs4 = nf + nf**0.75 * nz3**0.25 + nf ** (2 / 3) * nz3 ** (1 / 3)
    _record(rep, "sobolev_4", math.sqrt(l2_norm_sq(z1)), rhs4)

    sup3 = np.abs(fp).max(axis=2)
    q = 2.0 / s
    lhs5 = float((np.sum(sup3**q) * cell) ** (1 / q))
    rhs5 = (nf * n(f, 2) + n(f, 1) * n(f, 1, 2)) ** ((1 - s) / 2) * nf ** ((2 * s - 1) / 2) * n(f, 3) ** 0.5
    _record(rep, "sobolev_5", lhs5, rhs5)

    # HLS on horizontal slices: ||Lambda_h^{-s} f||_{L2(R2)} vs ||f||_{L^p(R2)}, worst slice
    lam = to_physical(lambda_h_pow(f, -s))
    p = 2.0 / (1.0 + s)
    worst_l = worst_r = 0.0
    worst = -1.0
    for z in range(grid.spec.N3):
        num = math.sqrt(np.sum(lam[..., z] ** 2) * cell)
        den = float((np.sum(np.abs(fp[..., z]) ** p) * cell) ** (1 / p))
        if den > 0 and num / den > worst:
            worst, worst_l, worst_r = num / den, num, den
    _record(rep, "hls", worst_l, worst_r if worst >= 0 else 0.0)
    return rep


def interpolation_gap(f: SpectralField, s: float) -> float:
    """||Lambda_h^{-s} f||^{1/(1+s)} ||grad_h f||^{s/(1+s)} - ||f|| (nonnegative when the bound holds)."""
    from .spectral import l2_norm_sq

    g = f.grid
    a = math.sqrt(l2_norm_sq(lambda_h_pow(f, -s)))
    b = math.sqrt(weighted_sq(f, g.kh2))
    return a ** (1 / (1 + s)) * b ** (s / (1 + s)) - math.sqrt(l2_norm_sq(f))
