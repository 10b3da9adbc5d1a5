"""Uniform-in-eps bound: R(eps) = sup_t [E + int D] / E(0) for shared initial data."""

import argparse
import math
import time
from pathlib import Path

from conormal_mhd.conormal import ConormalConfig
from conormal_mhd.dynamics import SolverConfig
from conormal_mhd.experiments import InitialDataSpec, run_uniform_bound_study
from conormal_mhd.io import parse_float_list, write_json
from conormal_mhd.spectral import GridSpec, plan_grid


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--n3", type=int, default=17)
    p.add_argument("--t-end", type=float, default=20.0)
    p.add_argument("--amplitude", type=float, default=1e-3)
    p.add_argument("--eps", type=parse_float_list, default=[1e-2, 1e-3, 1e-4])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("out/uniform"))
    args = p.parse_args()

    L = 8 * math.pi
    grid = plan_grid(GridSpec(args.n, args.n, args.n3, L, L, 2 * math.pi))
    data = InitialDataSpec(seed=args.seed, amplitude=args.amplitude, k_max=1.0)
    t0 = time.perf_counter()
    rep = run_uniform_bound_study(data, grid, args.eps, SolverConfig(t_end=args.t_end), ConormalConfig())
    elapsed = time.perf_counter() - t0

    args.out.mkdir(parents=True, exist_ok=True)
    write_json(args.out / "uniform_report.json", {**rep.to_dict(), "elapsed_s": elapsed})
    for e, r in zip(rep.eps, rep.ratios):
        print(f"eps={e:.0e}  R={r:.6f}")
    print(f"spread {rep.spread:.4f} (max {rep.spread_max}); {'PASS' if rep.passed else 'FAIL'} in {elapsed:.0f}s")


if __name__ == "__main__":
    main()
