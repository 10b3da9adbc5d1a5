import json
import math

import numpy as np
import pytest
from conftest import make_grid
from hypothesis import given, settings
from hypothesis import strategies as st

from conormal_mhd.conormal import ConormalConfig, full_functionals
from conormal_mhd.dynamics import (
    LinearModeMatrix,
    SolverConfig,
    State,
    evolve,
    linear_mode_solution,
)
from conormal_mhd.experiments import (
    EmptyBand,
    InitialDataSpec,
    NonPositiveValues,
    ScheduleMismatch,
    Spectrum,
    TooFewPoints,
    desk_grid_spec,
    difference_diagnostics,
    fit_power_law,
    gen_initial_data,
    run_decay_study,
    run_limit_study,
    run_uniform_bound_study,
    source_residual,
    trajectory_differences,
    worker_count,
)
from conormal_mhd.spectral import (
    boundary_traces,
    divergence,
    plan_grid,
    rms,
    to_physical,
)

# -- fitting


def test_fit_exact_power():
    x = np.linspace(1, 10, 12)
    slope, intercept, resid = fit_power_law(x, 4 * x**2)
    assert slope == pytest.approx(2.0, abs=1e-12)
    assert intercept == pytest.approx(math.log(4), abs=1e-12)
    assert resid <= 1e-12


def test_fit_wobbly_series():
    x = np.geomspace(1, 1e3, 200)
    y = x**-0.95 * (1 + 0.01 * np.sin(np.log(x)))
    assert fit_power_law(x, y)[0] == pytest.approx(-0.95, abs=0.02)


def test_fit_constant():
    assert fit_power_law([1, 2, 3, 4], [5, 5, 5, 5])[0] == pytest.approx(0.0, abs=1e-14)


def test_fit_errors():
    with pytest.raises(TooFewPoints):
        fit_power_law([1, 2], [1, 2])
    with pytest.raises(TooFewPoints):
        fit_power_law([1, 2, 3, 4], [1, 2, 3, 4], window=(3.5, 10))
    with pytest.raises(NonPositiveValues):
        fit_power_law([1, 2, 3], [1, 0, 3])


@given(p=st.floats(-3, 3), c=st.floats(0.1, 10))
@settings(max_examples=50, deadline=None)
def test_fit_recovers_exponent(p, c):
    x = np.geomspace(1, 50, 20)
    slope, intercept, _ = fit_power_law(x, c * x**p)
    assert slope == pytest.approx(p, abs=1e-9)
    assert intercept == pytest.approx(math.log(c), abs=1e-9)


# -- initial data


def test_zero_amplitude_gives_zero_state():
    g = make_grid(16, 16, 17)
    s = gen_initial_data(InitialDataSpec(amplitude=0.0), g)
    assert not s.u.coef.any() and not s.b.coef.any()


def test_initial_data_deterministic():
    g = make_grid(16, 16, 17, L1=8 * math.pi, L2=8 * math.pi)
    a = gen_initial_data(InitialDataSpec(seed=4), g)
    b = gen_initial_data(InitialDataSpec(seed=4), g)
    assert a.u.coef.tobytes() == b.u.coef.tobytes() and a.b.coef.tobytes() == b.b.coef.tobytes()
    c = gen_initial_data(InitialDataSpec(seed=5), g)
    assert not np.array_equal(a.u.coef, c.u.coef)


@pytest.mark.parametrize("spectrum", [Spectrum.LOW_BAND, Spectrum.RING, Spectrum.CUSTOM])
def test_initial_data_contract(spectrum):
    g = make_grid(32, 32, 17, L1=8 * math.pi, L2=8 * math.pi)
    spec = InitialDataSpec(seed=1, amplitude=2e-3, spectrum=spectrum, k_min=0.5, k_max=1.0, slope=-1.0)
    s = gen_initial_data(spec, g)
    ccfg = ConormalConfig()
    e, _ = full_functionals(s, ccfg.m, ccfg.s)
    assert e == pytest.approx(2e-3, rel=1e-8)
    for v in (s.u, s.b):
        assert np.abs(to_physical(divergence(v))).max() <= 1e-12 * max(rms(v), 1e-300) * 10
        assert max(boundary_traces(v).values()) <= 1e-12 * rms(v)
        assert not v.coef[:, 0, 0, :].any()
    if spectrum is Spectrum.RING:
        kh = np.sqrt(g.kh2)[..., 0]
        mag = np.abs(s.u.coef).sum(axis=(0, 3))
        live = mag > 1e-12 * mag.max()
        assert kh[live].min() >= 0.5 - 1e-12


def test_concentration_envelope_weights_bottom():
    g = make_grid(16, 16, 17, L1=8 * math.pi, L2=8 * math.pi)
    s = gen_initial_data(InitialDataSpec(seed=2), g)
    phys = to_physical(s.u[0])
    q = g.spec.N3 // 4
    top = np.sum(phys[..., -q:] ** 2)
    bottom = np.sum(phys[..., :q] ** 2)
    assert top < 0.05 * bottom


def test_empty_band():
    g = make_grid(16, 16, 17)  # smallest nonzero |k_h| is 1
    with pytest.raises(EmptyBand):
        gen_initial_data(InitialDataSpec(k_max=0.5), g)


@pytest.mark.parametrize("kw", [dict(amplitude=-1.0), dict(k_max=0.0), dict(k_min=2.0, k_max=1.0), dict(j_max=-1)])
def test_initial_spec_validation(kw):
    with pytest.raises(ValueError):
        InitialDataSpec(**kw)


def test_desk_grid():
    spec = desk_grid_spec()
    assert (spec.N1, spec.N2, spec.N3) == (64, 64, 17)
    assert spec.L1 == pytest.approx(16 * math.pi)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("MHD_THREADS", "1")
    assert worker_count(4) == 1
    monkeypatch.setenv("MHD_THREADS", "8")
    assert worker_count(3) == 3


# -- decay study


SMALL = dict(seed=0, amplitude=1e-3, k_max=1.0)


def test_decay_zero_data_passes():
    g = make_grid(16, 16, 17)
    rep = run_decay_study(InitialDataSpec(amplitude=0.0), g, SolverConfig(dt=0.1, t_end=2.0))
    assert rep.passed
    assert not any(rep.e_tan) and not any(rep.weighted_integral)


def test_decay_linear_modes():
    # linear-only, eps = 0: modes with k1 != 0 or k2 != 0 all decay exponentially
    g = make_grid(8, 8, 9)
    rep = run_decay_study(
        InitialDataSpec(**SMALL), g, SolverConfig(dt=0.25, t_end=20.0, nonlinear=False), fit_window=(5, 20)
    )
    assert rep.passed
    assert rep.weighted_e[-1] <= 1e-4 * rep.weighted_e[0]
    assert rep.exponent <= -0.9
    assert np.all(np.diff(rep.times) > 0)


def test_decay_report_deterministic():
    g = make_grid(16, 16, 9, L1=4 * math.pi, L2=4 * math.pi)
    cfg = SolverConfig(dt=0.2, t_end=2.0)
    a = run_decay_study(InitialDataSpec(**SMALL), g, cfg, fit_window=(0.5, 2), early=0.5)
    b = run_decay_study(InitialDataSpec(**SMALL), g, cfg, fit_window=(0.5, 2), early=0.5)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)


def test_decay_shrinking_data_keeps_pass():
    g = make_grid(16, 16, 9, L1=4 * math.pi, L2=4 * math.pi)
    cfg = SolverConfig(dt=0.25, t_end=10.0)
    big = run_decay_study(InitialDataSpec(**SMALL), g, cfg, fit_window=(2, 10), early=2)
    small = run_decay_study(InitialDataSpec(**{**SMALL, "amplitude": 5e-4}), g, cfg, fit_window=(2, 10), early=2)
    assert big.passed
    assert small.passed


def test_weighted_integral_trapezoid_order():
    g = make_grid(8, 8, 9)
    cfg = SolverConfig(dt=0.05, t_end=4.0, nonlinear=False)
    finals = {}
    for every in (8, 4, 2):
        rep = run_decay_study(InitialDataSpec(**SMALL), g, cfg, fit_window=(1, 4), early=1, sample_every=every)
        finals[every] = rep.weighted_integral[-1]
    ratio = (finals[8] - finals[4]) / (finals[4] - finals[2])
    assert math.log2(ratio) == pytest.approx(2.0, abs=0.3)


# -- uniform bound study


def test_uniform_rejects_zero_data():
    g = make_grid(16, 16, 17)
    with pytest.raises(ValueError):
        run_uniform_bound_study(InitialDataSpec(amplitude=0.0), g, [1e-2, 1e-3], SolverConfig(dt=0.5))


def _linear_mode_sup(base: State, eps: float, times, ccfg: ConormalConfig):
    """sup_t [E + int D] / E(0) with the state at each time from the per-mode closed form."""
    g = base.grid
    lm = LinearModeMatrix.for_grid(g, eps)
    nu_u, nu_b = np.broadcast_to(lm.nu_u, g.shape), np.broadcast_to(lm.nu_b, g.shape)
    k2 = np.broadcast_to(lm.coupling, g.shape)
    e_list, d_list = [], []
    for t in times:
        u = np.empty_like(base.u.coef)
        b = np.empty_like(base.b.coef)
        for i in range(3):
            u[i], b[i] = linear_mode_solution(nu_u, nu_b, k2, base.u.coef[i], base.b.coef[i], t)
        s = State(type(base.u)(g, u), type(base.b)(g, b), t, eps)
        e, d = full_functionals(s, ccfg.m, ccfg.s)
        e_list.append(e)
        d_list.append(d)
    e, d = np.array(e_list), np.array(d_list)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(times))])
    return float(np.max(e + cum) / e[0])


def test_uniform_linear_matches_mode_quadrature():
    g = make_grid(16, 16, 17)
    ccfg = ConormalConfig()
    data = InitialDataSpec(**SMALL)
    cfg = SolverConfig(dt=0.25, t_end=3.0, nonlinear=False)
    eps_list = [1e-2, 1e-3, 1e-4]
    rep = run_uniform_bound_study(data, g, eps_list, cfg, ccfg)
    base = gen_initial_data(data, g, ccfg)
    for eps, r in zip(eps_list, rep.ratios):
        assert r == pytest.approx(_linear_mode_sup(base, eps, rep.times, ccfg), rel=1e-10)
    assert rep.passed and rep.spread <= 1.25
    assert abs(rep.ratios[-1] - rep.ratios[-2]) <= abs(rep.ratios[0] - rep.ratios[1])


# -- limit study


def test_limit_study_zero_data_flags_undefined_slopes():
    g = make_grid(16, 16, 9)
    rep = run_limit_study(InitialDataSpec(amplitude=0.0), g, [1e-1, 1e-2], SolverConfig(dt=0.125, t_end=1.0))
    assert rep.slope_l2 is None and rep.slope_linf is None and rep.flags
    assert not rep.passed
    assert all(v == 0 for e in rep.eps for v in rep.l2[e])


def test_limit_study_eps_zero_entry_flagged():
    g = make_grid(16, 16, 9)
    rep = run_limit_study(InitialDataSpec(**SMALL), g, [1e-1, 0.0], SolverConfig(dt=0.125, t_end=1.0))
    assert rep.slope_l2 is None and rep.flags
    assert all(v == 0 for v in rep.l2[0.0])


@pytest.mark.parametrize("eps_list", [[1e-2], [1e-3, 1e-2], [1e-2, 1e-2]])
def test_limit_study_rejects_bad_eps(eps_list):
    g = make_grid(16, 16, 9)
    with pytest.raises(ValueError):
        run_limit_study(InitialDataSpec(**SMALL), g, eps_list, SolverConfig(dt=0.5))


def test_limit_study_rejects_low_order():
    g = make_grid(16, 16, 9)
    with pytest.raises(ValueError):
        run_limit_study(InitialDataSpec(**SMALL), g, [1e-1, 1e-2], SolverConfig(dt=0.5), m=4)


def test_limit_linear_closed_form():
    g = make_grid(16, 16, 9)
    data = InitialDataSpec(**SMALL)
    eps_list = [1e-1, 1e-2, 1e-3]
    rep = run_limit_study(data, g, eps_list, SolverConfig(dt=0.25, t_end=2.0, nonlinear=False))
    base = gen_initial_data(data, g, ConormalConfig(m=5))
    w = np.stack([g.mode_weight(b) for b in base.u.bases])

    def at(eps, t):
        lm = LinearModeMatrix.for_grid(g, eps)
        args = [np.broadcast_to(a, g.shape) for a in (lm.nu_u, lm.nu_b, lm.coupling)]
        out = [linear_mode_solution(*args, base.u.coef[i], base.b.coef[i], t) for i in range(3)]
        return np.stack([o[0] for o in out]), np.stack([o[1] for o in out])

    for eps, sup in zip(eps_list, rep.sup_l2):
        best = 0.0
        for t in rep.times:
            (ue, be), (u0, b0) = at(eps, t), at(0.0, t)
            best = max(best, math.sqrt(np.sum((np.abs(ue - u0) ** 2 + np.abs(be - b0) ** 2) * w)))
        assert sup == pytest.approx(best, rel=1e-9)
    assert rep.slope_l2 == pytest.approx(1.0, abs=0.05)
    assert rep.passed


def test_limit_nonlinear_small_grid():
    g = make_grid(16, 16, 9, L1=4 * math.pi, L2=4 * math.pi)
    rep = run_limit_study(InitialDataSpec(**SMALL), g, [1e-1, 1e-2, 1e-3], SolverConfig(dt=0.25, t_end=2.0))
    assert rep.passed
    assert rep.source_residual_max <= 1e-10
    assert all(np.isfinite(rep.ebar[1e-1])) and all(np.isfinite(rep.big_b[1e-1]))


def test_trajectory_schedule_mismatch():
    g = make_grid(8, 8, 9)
    s = State.zero(g)
    with pytest.raises(ScheduleMismatch):
        trajectory_differences([0.0, 1.0], [s, s], [0.0, 0.5], [s, s])
    out = trajectory_differences([0.0], [s], [0.0], [s])
    assert out[0]["l2"] == 0.0


def test_difference_diagnostics_and_source():
    g = make_grid(16, 16, 9, L1=4 * math.pi, L2=4 * math.pi)
    base = gen_initial_data(InitialDataSpec(**SMALL), g, ConormalConfig(m=5))
    cfg = SolverConfig(dt=0.25, t_end=1.0)
    se = evolve(base.with_eps(0.05), cfg).final
    s0 = evolve(base, cfg).final
    d = difference_diagnostics(se, s0)
    assert d["l2"] > 0 and d["linf"] > 0 and d["ebar"] > 0 and d["B"] >= d["B_h"] > 0
    size, rel = source_residual(se, s0)
    assert size > 0 and rel <= 1e-12


def test_grid_from_desk_spec_plans():
    g = plan_grid(desk_grid_spec(16, 16, 9))
    assert g.shape == (16, 16, 9)
