"""Temporal order of the L2 energy balance residual under dt refinement."""

import argparse
import math

import numpy as np

from conormal_mhd.dynamics import SolverConfig, State, energy_balance_residual, evolve, l2_dissipation, l2_energy
from conormal_mhd.spectral import (
    GridSpec,
    SpectralVectorField,
    dealias_vector,
    leray_project,
    plan_grid,
    vector_l2_norm_sq,
    vector_to_physical,
    vector_to_spectral,
)


def band_limited(g, rng, kmax=2.0, jmax=2):
    coef = rng.standard_normal((3,) + g.shape) + 1j * rng.standard_normal((3,) + g.shape)
    band = (np.sqrt(g.kh2) <= kmax) & (np.arange(g.spec.N3) <= jmax)[None, None, :]
    v = vector_to_spectral(g, vector_to_physical(SpectralVectorField(g, coef * band)))
    v = leray_project(dealias_vector(v))
    v.coef[:, 0, 0, :] = 0
    return v * (1 / math.sqrt(vector_l2_norm_sq(v) / g.volume))


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--amplitude", type=float, default=0.3)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--t-end", type=float, default=0.64)
    p.add_argument("--dt", type=float, nargs="+", default=[0.02, 0.01, 0.005])
    p.add_argument("--rk-order", type=int, default=3, choices=(2, 3))
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args()

    g = plan_grid(GridSpec(32, 32, 17))
    rng = np.random.default_rng(args.seed)
    s0 = State(band_limited(g, rng) * args.amplitude, band_limited(g, rng) * args.amplitude, 0.0, args.eps)
    res = []
    for dt in args.dt:
        cfg = SolverConfig(dt=dt, t_end=args.t_end, rk_order=args.rk_order)
        traj = evolve(s0, cfg, 1, lambda x: (l2_energy(x), l2_dissipation(x)))
        e, d = zip(*traj.observations)
        res.append(energy_balance_residual(traj.times, e, d))
        print(f"dt={dt:<8g} residual {res[-1]:.3e}")
    order = np.polyfit(np.log(args.dt), np.log(res), 1)[0]
    print(f"fitted order {order:.2f} (rk_order {args.rk_order})")


if __name__ == "__main__":
    main()
