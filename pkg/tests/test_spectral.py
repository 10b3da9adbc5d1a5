import math

import numpy as np
import pytest
from conftest import TWO_PI, make_grid, random_solenoidal
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import DenseSlab

from conormal_mhd.spectral import (
    C,
    GridSpec,
    InvalidSpec,
    S,
    ShapeMismatch,
    SpectralField,
    SpectralVectorField,
    boundary_traces,
    dealias,
    derivative,
    divergence,
    gradient,
    inner,
    l2_norm_sq,
    lambda_h_pow,
    leray_project,
    multiply,
    physical_l2_norm_sq,
    plan_grid,
    rms,
    to_physical,
    to_spectral,
    vector_l2_norm_sq,
    vector_to_physical,
    vector_to_spectral,
)


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def _random_scalar(grid, rng, basis, keep=None):
    f = to_spectral(grid, rng.standard_normal(grid.shape), basis)
    if keep is not None:
        f = SpectralField(grid, f.coef * keep, basis)
    return f


# -- plan_grid


def test_plan_grid_wavenumbers_8():
    g = make_grid(8, 8, 9)
    assert sorted(g.k1.ravel().round(12)) == list(range(-4, 4))
    assert g.shape[2] == 9
    assert g.x3[0] == 0 and g.x3[-1] == pytest.approx(TWO_PI)


def test_plan_grid_rejects_odd_horizontal():
    with pytest.raises(InvalidSpec):
        plan_grid(GridSpec(7, 8, 9))


@pytest.mark.parametrize("spec", [GridSpec(8, 8, 3), GridSpec(8, 8, 9, L1=0.0), GridSpec(8, 8, 9, dealias_fraction=0)])
def test_plan_grid_rejects_invalid(spec):
    with pytest.raises(InvalidSpec):
        plan_grid(spec)


def test_plan_grid_large_box_smallest_wavenumber():
    g = plan_grid(GridSpec(64, 64, 33, 16 * math.pi, 16 * math.pi, TWO_PI))
    k = np.abs(g.k1.ravel())
    assert k[k > 0].min() == pytest.approx(1 / 8, rel=1e-14)


def test_grid_tables_are_readonly():
    g = make_grid()
    with pytest.raises(ValueError):
        g.k1[0, 0, 0] = 1.0


# -- transforms


def test_constant_cosine_is_single_coefficient():
    g = make_grid()
    f = to_spectral(g, np.full(g.shape, 2.5), C)
    expected = np.zeros(g.shape, complex)
    expected[0, 0, 0] = 2.5
    np.testing.assert_allclose(f.coef, expected, atol=1e-14)


def test_sine_profile_is_single_mode():
    g = make_grid(8, 8, 9)
    x3 = g.x3[None, None, :]
    f = to_spectral(g, np.broadcast_to(np.sin(math.pi * x3 / g.spec.L3), g.shape), S)
    nz = np.argwhere(np.abs(f.coef) > 1e-13)
    assert nz.tolist() == [[0, 0, 1]]
    assert f.coef[0, 0, 1].real == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("basis", [C, S])
def test_round_trip(basis, rng):
    g = make_grid(16, 8, 13)
    vals = rng.standard_normal(g.shape)
    if basis is S:
        vals[..., 0] = vals[..., -1] = 0.0  # sine series vanish at the walls
    back = to_physical(to_spectral(g, vals, basis))
    assert _rel(back, vals) <= 1e-12


def test_shape_mismatch(rng):
    g = make_grid()
    with pytest.raises(ShapeMismatch):
        to_spectral(g, rng.standard_normal((4, 4, 4)), C)


@pytest.mark.parametrize("basis", [C, S])
def test_forward_transform_matches_quadrature_oracle(basis, rng):
    g = make_grid(8, 6, 8)
    slab = DenseSlab(8, 6, 8)
    vals = rng.standard_normal(g.shape)
    if basis is S:
        vals[..., 0] = vals[..., -1] = 0.0
    f = to_spectral(g, vals, basis)
    ref = slab.project(vals, basis.value)
    assert _rel(f.coef, ref) <= 1e-12


@pytest.mark.parametrize("basis", [C, S])
def test_inverse_transform_matches_dense_evaluation(basis, rng):
    g = make_grid(8, 6, 8)
    slab = DenseSlab(8, 6, 8)
    f = _random_scalar(g, rng, basis, g.mask)
    assert _rel(to_physical(f), slab.evaluate(f.coef, basis.value)) <= 1e-12


@given(a=st.floats(-3, 3), b=st.floats(-3, 3))
@settings(max_examples=20, deadline=None)
def test_transform_linear(a, b):
    rng = np.random.default_rng(7)
    g = make_grid()
    x, y = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
    lhs = to_spectral(g, a * x + b * y, C).coef
    rhs = a * to_spectral(g, x, C).coef + b * to_spectral(g, y, C).coef
    assert np.abs(lhs - rhs).max() <= 1e-12 * (1 + np.abs(rhs).max())


# -- derivatives


def test_d3_of_cosine():
    g = make_grid(8, 8, 9)
    L3 = g.spec.L3
    x3 = g.x3[None, None, :]
    f = to_spectral(g, np.broadcast_to(np.cos(math.pi * x3 / L3), g.shape), C)
    d = derivative(f, 3)
    assert d.basis is S
    expected = -(math.pi / L3) * np.sin(math.pi * x3 / L3)
    np.testing.assert_allclose(to_physical(d), np.broadcast_to(expected, g.shape), atol=1e-13)


def test_d1_of_exponential():
    g = make_grid(8, 8, 9)
    coef = g.zeros()
    coef[1, 0, 0] = 1.0  # exp(i x1)
    d = derivative(SpectralField(g, coef, C), 1)
    assert d.coef[1, 0, 0] == pytest.approx(1j)
    assert np.count_nonzero(d.coef) == 1


def test_second_derivative_is_multiplier_composition(rng):
    g = make_grid(16, 16, 9)
    f = _random_scalar(g, rng, C, g.mask)
    dd = derivative(derivative(f, 2), 2)
    ref = -(g.k2**2) * f.coef
    assert _rel(dd.coef, ref) <= 1e-13


@pytest.mark.parametrize("axis", [1, 2, 3])
@pytest.mark.parametrize("basis", [C, S])
def test_derivative_matches_analytic_oracle(axis, basis, rng):
    g = make_grid(8, 8, 8)
    slab = DenseSlab(8, 8, 8)
    f = _random_scalar(g, rng, basis, g.mask)
    order = [0, 0, 0]
    order[axis - 1] = 1
    ref = slab.evaluate(f.coef, basis.value, *order)
    assert _rel(to_physical(derivative(f, axis)), ref) <= 1e-12


def test_derivative_bad_axis():
    g = make_grid()
    with pytest.raises(ValueError):
        derivative(SpectralField(g, g.zeros(), C), 4)


# -- Leray projection


def test_leray_kills_gradients(rng):
    g = make_grid(16, 16, 9)
    p = _random_scalar(g, rng, C, g.mask)
    out = leray_project(gradient(p))
    assert np.abs(out.coef).max() <= 1e-12 * np.abs(gradient(p).coef).max()


def test_leray_preserves_solenoidal(rng):
    g = make_grid(16, 16, 9)
    v = random_solenoidal(g, rng)
    assert _rel(leray_project(v).coef, v.coef) <= 1e-13


def test_leray_idempotent_and_contractive(rng):
    g = make_grid(16, 8, 9)
    shape = (3,) + g.shape
    raw = vector_to_physical(SpectralVectorField(g, rng.standard_normal(shape) + 1j * rng.standard_normal(shape)))
    v = vector_to_spectral(g, raw)
    once = leray_project(v)
    twice = leray_project(once)
    assert _rel(twice.coef, once.coef) <= 1e-13
    assert vector_l2_norm_sq(once) <= vector_l2_norm_sq(v) * (1 + 1e-14)
    div = to_physical(divergence(once))
    assert np.abs(div).max() <= 1e-10 * rms(once)


def test_leray_keeps_boundary_traces(rng):
    g = make_grid(16, 8, 9)
    v = random_solenoidal(g, rng)
    traces = boundary_traces(v)
    assert max(traces.values()) <= 1e-12 * rms(v)


def test_horizontal_derivative_commutes_with_projection(rng):
    g = make_grid(16, 16, 9)
    v = random_solenoidal(g, rng)
    for axis in (1, 2):
        dv = SpectralVectorField.from_components([derivative(c, axis) for c in v.components()])
        a = leray_project(dv).coef
        assert _rel(a, dv.coef) <= 1e-13


# -- fractional multiplier


def test_lambda_zero_exponent_identity(rng):
    g = make_grid()
    f = _random_scalar(g, rng, C, g.mask)
    f.coef[0, 0, :] = 0
    assert _rel(lambda_h_pow(f, 0.0).coef, f.coef) == 0


def test_lambda_single_mode():
    g = make_grid(8, 8, 9)
    coef = g.zeros()
    coef[2, 0, 1] = 1.0  # |k_h| = 2
    out = lambda_h_pow(SpectralField(g, coef, C), -0.95)
    assert out.coef[2, 0, 1].real == pytest.approx(2 ** -0.95, rel=1e-14)


@given(s=st.floats(0.05, 2.0))
@settings(max_examples=25, deadline=None)
def test_lambda_inverse_pair(s):
    rng = np.random.default_rng(3)
    g = make_grid(8, 8, 9)
    f = _random_scalar(g, rng, C, g.mask)
    f.coef[0, 0, :] = 0
    back = lambda_h_pow(lambda_h_pow(f, s), -s)
    assert _rel(back.coef, f.coef) <= 1e-12


def test_lambda_negative_zeroes_mean(rng):
    g = make_grid()
    f = _random_scalar(g, rng, C)
    assert np.all(lambda_h_pow(f, -0.5).coef[0, 0, :] == 0)


@given(s=st.floats(0.0, 1.0))
@settings(max_examples=25, deadline=None)
def test_lambda_negative_norm_bound(s):
    rng = np.random.default_rng(11)
    g = make_grid(8, 8, 9, L1=3.0, L2=5.0)
    f = _random_scalar(g, rng, S, g.mask)
    f.coef[0, 0, :] = 0
    kmin = np.sqrt(g.kh2[g.kh2 > 0].min())
    assert l2_norm_sq(lambda_h_pow(f, -s)) <= kmin ** (-2 * s) * l2_norm_sq(f) * (1 + 1e-13)


# -- dealiasing and products


def test_dealias_inside_mask_unchanged(rng):
    g = make_grid()
    f = _random_scalar(g, rng, C, g.mask)
    assert np.array_equal(dealias(f).coef, f.coef)


def test_dealias_zeroes_first_excluded_mode():
    g = make_grid(12, 12, 10)
    coef = g.zeros()
    n_keep = int(math.floor(2 / 3 * 6))
    coef[n_keep, 0, 0] = 1.0
    coef[n_keep + 1, 0, 0] = 1.0
    out = dealias(SpectralField(g, coef, C)).coef
    assert out[n_keep, 0, 0] == 1.0 and out[n_keep + 1, 0, 0] == 0.0


@given(seed=st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_dealias_never_adds_energy_and_idempotent(seed):
    rng = np.random.default_rng(seed)
    g = make_grid()
    f = _random_scalar(g, rng, C)
    once = dealias(f)
    assert l2_norm_sq(once) <= l2_norm_sq(f) * (1 + 1e-14)
    assert np.array_equal(dealias(once).coef, once.coef)


def test_product_parity_and_mask(rng):
    g = make_grid(16, 16, 13)
    a = _random_scalar(g, rng, C, g.mask)
    b = _random_scalar(g, rng, S, g.mask)
    p = multiply(a, b)
    assert p.basis is S
    assert np.all(p.coef[~g.mask] == 0)


# -- Parseval


@pytest.mark.parametrize("basis", [C, S])
def test_parseval(basis, rng):
    g = make_grid(16, 8, 11, L1=3.0, L2=7.0, L3=2.0)
    f = _random_scalar(g, rng, basis)
    assert l2_norm_sq(f) == pytest.approx(physical_l2_norm_sq(g, to_physical(f)), rel=1e-12)


def test_inner_matches_physical(rng):
    g = make_grid(8, 8, 9)
    f, h = _random_scalar(g, rng, C), _random_scalar(g, rng, C)
    slab = DenseSlab(8, 8, 9)
    ref = float(np.sum(to_physical(f) * to_physical(h) * slab.wz)) * (g.dx[0] * g.dx[1])
    assert inner(f, h) == pytest.approx(ref, rel=1e-12)


def test_inner_rejects_mixed_bases(rng):
    g = make_grid()
    with pytest.raises(ValueError):
        inner(_random_scalar(g, rng, C), _random_scalar(g, rng, S))
