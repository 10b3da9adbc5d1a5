"""Slab spectral discretization: periodic in x1, x2, cosine/sine in x3.

The domain is [0, L1) x [0, L2) x [0, L3]. Horizontal directions use a full
complex FFT; the vertical direction uses type-I cosine and sine expansions on
the N3 equispaced points x3_j = j L3 / (N3 - 1), walls included.

A scalar f with a Cosine tag is represented as

    f(x) = sum_{k, j} c[k1, k2, j] exp(i k.x_h) cos(j pi x3 / L3)

and a Sine-tagged scalar uses sin(j pi x3 / L3) instead. Coefficient arrays
have shape (N1, N2, N3) and are normalised so that c = fft2(f) / (N1 N2).

With M = N3 - 1, sine mode j = M (and j = 0) vanishes on the grid and is kept
identically zero; consequently the vertical wavenumber of mode M is treated as
zero by every vertical operator.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft as sfft


class InvalidSpec(ValueError):
    """Raised when a GridSpec violates its invariants."""


class ShapeMismatch(ValueError):
    pass


class VerticalBasis(enum.Enum):
    COSINE = "C"
    SINE = "S"

    def flipped(self) -> "VerticalBasis":
        return VerticalBasis.SINE if self is VerticalBasis.COSINE else VerticalBasis.COSINE

    def times(self, other: "VerticalBasis") -> "VerticalBasis":
        """Parity of a pointwise product."""
        return VerticalBasis.COSINE if self is other else VerticalBasis.SINE


C = VerticalBasis.COSINE
S = VerticalBasis.SINE
VELOCITY_BASES = (C, C, S)
VORTICITY_BASES = (S, S, C)


@dataclass(frozen=True)
class GridSpec:
    N1: int
    N2: int
    N3: int
    L1: float = 2 * np.pi
    L2: float = 2 * np.pi
    L3: float = 2 * np.pi
    dealias_fraction: float = 2.0 / 3.0

    def validate(self) -> None:
        for name in ("N1", "N2", "N3"):
            n = getattr(self, name)
            if int(n) != n or n <= 0:
                raise InvalidSpec(f"{name} must be a positive integer, got {n}")
        if self.N1 % 2 or self.N2 % 2:
            raise InvalidSpec(f"N1 and N2 must be even, got N1={self.N1}, N2={self.N2}")
        if self.N3 < 4:
            raise InvalidSpec(f"N3 must be >= 4, got {self.N3}")
        for name in ("L1", "L2", "L3"):
            if not getattr(self, name) > 0:
                raise InvalidSpec(f"{name} must be strictly positive")
        if not 0 < self.dealias_fraction <= 1:
            raise InvalidSpec("dealias_fraction must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class Grid:
    """Immutable wavenumber tables, collocation points and masks for a GridSpec.

    Build with :func:`plan_grid`. All arrays are read-only and broadcast
    against coefficient arrays of shape (N1, N2, N3).
    """

    spec: GridSpec
    k1: np.ndarray  # true wavenumbers, shape (N1, 1, 1)
    k2: np.ndarray  # shape (1, N2, 1)
    kappa: np.ndarray  # vertical wavenumbers j pi / L3, mode M zeroed; shape (1, 1, N3)
    dk1: np.ndarray  # wavenumbers used by odd derivatives (Nyquist zeroed)
    dk2: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    mask: np.ndarray  # dealiasing mask, bool (N1, N2, N3)
    weights: dict = field(repr=False)  # basis -> L2 quadrature weight per vertical mode

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.spec.N1, self.spec.N2, self.spec.N3)

    @property
    def M(self) -> int:
        return self.spec.N3 - 1

    @property
    def kh2(self) -> np.ndarray:
        return self.k1**2 + self.k2**2

    @property
    def dx(self) -> tuple[float, float, float]:
        s = self.spec
        return (s.L1 / s.N1, s.L2 / s.N2, s.L3 / (s.N3 - 1))

    @property
    def volume(self) -> float:
        s = self.spec
        return s.L1 * s.L2 * s.L3

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape, dtype=complex)

    def mode_weight(self, basis: VerticalBasis) -> np.ndarray:
        return self.weights[basis]

    def horizontal_mean_mask(self) -> np.ndarray:
        """True on the k_h = 0 column."""
        return (self.k1 == 0) & (self.k2 == 0) & np.ones((1, 1, self.spec.N3), bool)

    def retained_vertical_max(self) -> int:
        return int(np.floor(self.spec.dealias_fraction * self.M + 1e-12))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def plan_grid(spec: GridSpec) -> Grid:
    spec.validate()
    N1, N2, N3 = spec.N1, spec.N2, spec.N3
    M = N3 - 1
    n1 = sfft.fftfreq(N1, 1.0 / N1)
    n2 = sfft.fftfreq(N2, 1.0 / N2)
    k1 = 2 * np.pi / spec.L1 * n1
    k2 = 2 * np.pi / spec.L2 * n2
    dk1 = np.where(n1 == -N1 // 2, 0.0, k1)
    dk2 = np.where(n2 == -N2 // 2, 0.0, k2)
    j = np.arange(N3)
    kappa = np.pi * j / spec.L3
    kappa[M] = 0.0

    f = spec.dealias_fraction
    keep1 = np.abs(n1) <= f * N1 / 2
    keep2 = np.abs(n2) <= f * N2 / 2
    keep3 = j <= f * M + 1e-12
    mask = keep1[:, None, None] & keep2[None, :, None] & keep3[None, None, :]

    wc = np.full(N3, spec.L1 * spec.L2 * spec.L3 / 2)
    wc[0] = wc[M] = spec.L1 * spec.L2 * spec.L3
    ws = np.full(N3, spec.L1 * spec.L2 * spec.L3 / 2)
    ws[0] = ws[M] = 0.0

    return Grid(
        spec=spec,
        k1=_readonly(k1.reshape(N1, 1, 1)),
        k2=_readonly(k2.reshape(1, N2, 1)),
        kappa=_readonly(kappa.reshape(1, 1, N3)),
        dk1=_readonly(dk1.reshape(N1, 1, 1)),
        dk2=_readonly(dk2.reshape(1, N2, 1)),
        x1=_readonly(np.arange(N1) * spec.L1 / N1),
        x2=_readonly(np.arange(N2) * spec.L2 / N2),
        x3=_readonly(np.arange(N3) * spec.L3 / M),
        mask=_readonly(mask),
        weights={C: _readonly(wc.reshape(1, 1, N3)), S: _readonly(ws.reshape(1, 1, N3))},
    )


# ---------------------------------------------------------------------------
# vertical transforms (last axis)


def vertical_forward(values: np.ndarray, basis: VerticalBasis) -> np.ndarray:
    """Physical x3 samples -> vertical mode coefficients along the last axis."""
    N3 = values.shape[-1]
    M = N3 - 1
    out = np.zeros(values.shape, dtype=np.result_type(values, float))
    if basis is C:
        y = sfft.dct(values, type=1, axis=-1)
        out[...] = y / M
        out[..., 0] /= 2
        out[..., M] /= 2
    else:
        y = sfft.dst(values[..., 1:M], type=1, axis=-1)
        out[..., 1:M] = y / M
    return out


def vertical_inverse(coef: np.ndarray, basis: VerticalBasis) -> np.ndarray:
    """Vertical mode coefficients -> physical x3 samples along the last axis."""
    N3 = coef.shape[-1]
    M = N3 - 1
    if basis is C:
        y = coef.copy()
        y[..., 0] *= 2
        y[..., M] *= 2
        return sfft.idct(y, type=1, axis=-1) * M
    out = np.zeros_like(coef)
    out[..., 1:M] = sfft.idst(coef[..., 1:M], type=1, axis=-1) * M
    return out


# ---------------------------------------------------------------------------
# fields


class SpectralField:
    """A real scalar on the slab held as spectral coefficients plus a vertical basis tag."""

    __slots__ = ("grid", "coef", "basis")

    def __init__(self, grid: Grid, coef: np.ndarray, basis: VerticalBasis):
        if coef.shape != grid.shape:
            raise ShapeMismatch(f"coefficient shape {coef.shape} != grid shape {grid.shape}")
        self.grid = grid
        self.coef = coef
        self.basis = basis

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_basis(self, other)
        return SpectralField(self.grid, self.coef + other.coef, self.basis)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_basis(self, other)
        return SpectralField(self.grid, self.coef - other.coef, self.basis)

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coef, self.basis)

    def __mul__(self, a: float) -> "SpectralField":
        return SpectralField(self.grid, a * self.coef, self.basis)

    __rmul__ = __mul__

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coef.copy(), self.basis)

    def __repr__(self) -> str:
        return f"SpectralField(basis={self.basis.name}, shape={self.coef.shape})"


def _check_same_basis(a: SpectralField, b: SpectralField) -> None:
    if a.basis is not b.basis:
        raise ValueError(f"basis mismatch: {a.basis.name} vs {b.basis.name}")


class SpectralVectorField:
    """Three spectral components stacked in one (3, N1, N2, N3) array."""

    __slots__ = ("grid", "coef", "bases")

    def __init__(self, grid: Grid, coef: np.ndarray, bases: Sequence[VerticalBasis] = VELOCITY_BASES):
        if coef.shape != (3,) + grid.shape:
            raise ShapeMismatch(f"vector coefficient shape {coef.shape} != {(3,) + grid.shape}")
        self.grid = grid
        self.coef = coef
        self.bases = tuple(bases)

    @classmethod
    def zeros(cls, grid: Grid, bases: Sequence[VerticalBasis] = VELOCITY_BASES) -> "SpectralVectorField":
        return cls(grid, np.zeros((3,) + grid.shape, dtype=complex), bases)

    @classmethod
    def from_components(cls, comps: Sequence[SpectralField]) -> "SpectralVectorField":
        grid = comps[0].grid
        return cls(grid, np.stack([c.coef for c in comps]), [c.basis for c in comps])

    def __getitem__(self, i: int) -> SpectralField:
        return SpectralField(self.grid, self.coef[i], self.bases[i])

    def components(self) -> list[SpectralField]:
        return [self[i] for i in range(3)]

    def __add__(self, other: "SpectralVectorField") -> "SpectralVectorField":
        return SpectralVectorField(self.grid, self.coef + other.coef, self.bases)

    def __sub__(self, other: "SpectralVectorField") -> "SpectralVectorField":
        return SpectralVectorField(self.grid, self.coef - other.coef, self.bases)

    def __neg__(self) -> "SpectralVectorField":
        return SpectralVectorField(self.grid, -self.coef, self.bases)

    def __mul__(self, a: float) -> "SpectralVectorField":
        return SpectralVectorField(self.grid, a * self.coef, self.bases)

    __rmul__ = __mul__

    def copy(self) -> "SpectralVectorField":
        return SpectralVectorField(self.grid, self.coef.copy(), self.bases)

    def __repr__(self) -> str:
        tags = "".join(b.value for b in self.bases)
        return f"SpectralVectorField(bases={tags}, shape={self.coef.shape[1:]})"


# ---------------------------------------------------------------------------
# transforms


def to_spectral(grid: Grid, f: np.ndarray, basis: VerticalBasis) -> SpectralField:
    if f.shape != grid.shape:
        raise ShapeMismatch(f"sample shape {f.shape} != grid shape {grid.shape}")
    hat = sfft.fft2(f, axes=(0, 1)) / (grid.spec.N1 * grid.spec.N2)
    return SpectralField(grid, vertical_forward(hat, basis), basis)


def to_physical(f: SpectralField) -> np.ndarray:
    v = vertical_inverse(f.coef, f.basis)
    return sfft.ifft2(v, axes=(0, 1)).real * (f.grid.spec.N1 * f.grid.spec.N2)


def batch_to_physical(grid: Grid, coefs: np.ndarray, bases) -> np.ndarray:
    """Inverse transform a stack of coefficient arrays of real fields.

    Uses the Hermitian half of the horizontal spectrum, then real vertical
    transforms grouped by basis.
    """
    N1, N2 = grid.spec.N1, grid.spec.N2
    half = coefs[..., : N2 // 2 + 1, :]
    mid = sfft.irfftn(half, s=(N1, N2), axes=(-3, -2)) * (N1 * N2)
    out = np.empty(mid.shape)
    for basis in (C, S):
        idx = [i for i, b in enumerate(bases) if b is basis]
        if idx:
            out[idx] = vertical_inverse(mid[idx], basis)
    return out


def _hermitian_fill(half: np.ndarray, N1: int, N2: int) -> np.ndarray:
    full = np.empty(half.shape[:-3] + (N1, N2) + half.shape[-1:], dtype=complex)
    h = half.shape[-2]
    full[..., :h, :] = half
    if N2 - h > 0:
        k1 = (-np.arange(N1)) % N1
        k2 = N2 - np.arange(h, N2)
        full[..., h:, :] = np.conj(half[..., k1[:, None], k2[None, :], :])
    return full


def batch_to_spectral(grid: Grid, values: np.ndarray, bases) -> np.ndarray:
    """Forward transform a stack of real physical arrays, grouped by vertical basis."""
    N1, N2 = grid.spec.N1, grid.spec.N2
    mid = np.empty(values.shape)
    for basis in (C, S):
        idx = [i for i, b in enumerate(bases) if b is basis]
        if idx:
            mid[idx] = vertical_forward(values[idx], basis)
    half = sfft.rfftn(mid, axes=(-3, -2)) / (N1 * N2)
    return _hermitian_fill(half, N1, N2)


def vector_to_spectral(grid: Grid, v: np.ndarray, bases=VELOCITY_BASES) -> SpectralVectorField:
    return SpectralVectorField.from_components([to_spectral(grid, v[i], bases[i]) for i in range(3)])


def vector_to_physical(v: SpectralVectorField) -> np.ndarray:
    return batch_to_physical(v.grid, v.coef, v.bases)


def evaluate_at_height(f: SpectralField, x3: float) -> np.ndarray:
    """Horizontal physical slice of f at an arbitrary height by direct summation of the vertical series."""
    g = f.grid
    j = np.arange(g.spec.N3)
    arg = j * np.pi * x3 / g.spec.L3
    b = np.cos(arg) if f.basis is C else np.sin(arg)
    if f.basis is S:
        b[0] = b[g.M] = 0.0
    col = np.tensordot(f.coef, b, axes=([2], [0]))
    return sfft.ifft2(col).real * (g.spec.N1 * g.spec.N2)


# ---------------------------------------------------------------------------
# differential and multiplier operators


def _vertical_derivative(coef: np.ndarray, basis: VerticalBasis, kappa: np.ndarray) -> np.ndarray:
    if basis is C:
        return -kappa * coef  # d/dx3 cos = -kappa sin
    return kappa * coef  # d/dx3 sin = kappa cos


def derivative(f: SpectralField, axis: int) -> SpectralField:
    """Exact spectral derivative along axis 1, 2 or 3 (1-based, as in the x1, x2, x3 labels)."""
    g = f.grid
    if axis == 1:
        return SpectralField(g, 1j * g.dk1 * f.coef, f.basis)
    if axis == 2:
        return SpectralField(g, 1j * g.dk2 * f.coef, f.basis)
    if axis == 3:
        return SpectralField(g, _vertical_derivative(f.coef, f.basis, g.kappa), f.basis.flipped())
    raise ValueError(f"axis must be 1, 2 or 3, got {axis}")


def divergence(v: SpectralVectorField) -> SpectralField:
    if v.bases != VELOCITY_BASES:
        raise ValueError("divergence expects (Cosine, Cosine, Sine) components")
    return derivative(v[0], 1) + derivative(v[1], 2) + derivative(v[2], 3)


def gradient(p: SpectralField) -> SpectralVectorField:
    return SpectralVectorField.from_components([derivative(p, 1), derivative(p, 2), derivative(p, 3)])


def _leray_vectors(grid: Grid):
    # div multiplier D = (i k1, i k2, kappa); gradient multiplier G = (i k1, i k2, -kappa) = -conj(D)
    k2tot = grid.dk1**2 + grid.dk2**2 + grid.kappa**2
    inv = np.divide(1.0, k2tot, out=np.zeros(np.broadcast(k2tot).shape), where=k2tot > 0)
    return inv


def leray_project(v: SpectralVectorField) -> SpectralVectorField:
    """L2-orthogonal projection onto divergence-free fields compatible with the slip bases."""
    if v.bases != VELOCITY_BASES:
        raise ValueError("leray_project expects (Cosine, Cosine, Sine) components")
    g = v.grid
    inv = _leray_vectors(g)
    u1, u2, u3 = v.coef
    div = 1j * g.dk1 * u1 + 1j * g.dk2 * u2 + g.kappa * u3
    phi = div * inv
    out = np.empty_like(v.coef)
    out[0] = u1 + 1j * g.dk1 * phi
    out[1] = u2 + 1j * g.dk2 * phi
    out[2] = u3 - g.kappa * phi
    out[2][..., 0] = 0.0
    out[2][..., g.M] = 0.0
    return SpectralVectorField(g, out, v.bases)


def lambda_h_pow(f: SpectralField, s_exp: float) -> SpectralField:
    """Horizontal fractional multiplier |k_h|^s_exp; the k_h = 0 column is zeroed when s_exp < 0."""
    g = f.grid
    kh = np.sqrt(g.kh2)
    if s_exp == 0:
        mult = np.ones_like(kh)
    elif s_exp < 0:
        mult = np.zeros_like(kh)
        np.power(kh, s_exp, out=mult, where=kh > 0)
    else:
        mult = kh**s_exp
    return SpectralField(g, mult * f.coef, f.basis)


def dealias(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, np.where(f.grid.mask, f.coef, 0.0), f.basis)


def dealias_vector(v: SpectralVectorField) -> SpectralVectorField:
    return SpectralVectorField(v.grid, np.where(v.grid.mask, v.coef, 0.0), v.bases)


def remove_horizontal_mean(coef: np.ndarray, grid: Grid) -> np.ndarray:
    out = coef.copy()
    out[..., 0, 0, :] = 0.0
    return out


def multiply(f: SpectralField, g: SpectralField, *, dealiased: bool = True) -> SpectralField:
    """Pseudo-spectral product; output basis follows the parity rule, then 2/3 truncation."""
    prod = to_physical(f) * to_physical(g)
    out = to_spectral(f.grid, prod, f.basis.times(g.basis))
    return dealias(out) if dealiased else out


# ---------------------------------------------------------------------------
# inner products and norms (coefficient side of Parseval)


def inner(f: SpectralField, g: SpectralField) -> float:
    """L2 inner product of two real fields sharing a basis."""
    _check_same_basis(f, g)
    w = f.grid.mode_weight(f.basis)
    return float(np.real(np.sum(np.conj(f.coef) * g.coef * w)))


def l2_norm_sq(f: SpectralField) -> float:
    w = f.grid.mode_weight(f.basis)
    return float(np.sum(np.abs(f.coef) ** 2 * w))


def vector_l2_norm_sq(v: SpectralVectorField) -> float:
    return sum(l2_norm_sq(c) for c in v.components())


def physical_l2_norm_sq(grid: Grid, f: np.ndarray) -> float:
    """Trapezoid rule in x3, rectangle rule horizontally."""
    w3 = np.full(grid.spec.N3, grid.dx[2])
    w3[0] = w3[-1] = grid.dx[2] / 2
    return float(np.sum(f**2 * w3) * grid.dx[0] * grid.dx[1])


def boundary_traces(v: SpectralVectorField) -> dict[str, float]:
    """Max magnitudes of v3 and d3 v_h at x3 = 0 and x3 = L3 from the series."""
    L3 = v.grid.spec.L3
    out = {}
    for name, x3 in (("bottom", 0.0), ("top", L3)):
        w3 = np.max(np.abs(evaluate_at_height(v[2], x3)))
        dh = max(np.max(np.abs(evaluate_at_height(derivative(v[i], 3), x3))) for i in (0, 1))
        out[name] = float(max(w3, dh))
    return out


def rms(v: SpectralVectorField) -> float:
    return float(np.sqrt(vector_l2_norm_sq(v) / v.grid.volume))
