"""Vanishing-dissipation rates: sup-in-time differences to the eps = 0 run, fitted against eps."""

import argparse
import math
import time
from pathlib import Path

from conormal_mhd.dynamics import SolverConfig
from conormal_mhd.experiments import InitialDataSpec, run_limit_study
from conormal_mhd.io import parse_float_list, write_csv, write_json
from conormal_mhd.spectral import GridSpec, plan_grid


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--n3", type=int, default=17)
    p.add_argument("--t-end", type=float, default=10.0)
    p.add_argument("--amplitude", type=float, default=1e-3)
    p.add_argument("--eps", type=parse_float_list, default=[1e-1, 1e-2, 1e-3, 1e-4])
    p.add_argument("--sample-every", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("out/limit"))
    args = p.parse_args()

    L = 8 * math.pi
    grid = plan_grid(GridSpec(args.n, args.n, args.n3, L, L, 2 * math.pi))
    data = InitialDataSpec(seed=args.seed, amplitude=args.amplitude, k_max=1.0)
    t0 = time.perf_counter()
    rep = run_limit_study(data, grid, args.eps, SolverConfig(t_end=args.t_end), sample_every=args.sample_every)
    elapsed = time.perf_counter() - t0

    args.out.mkdir(parents=True, exist_ok=True)
    write_json(args.out / "limit_report.json", {**rep.to_dict(), "elapsed_s": elapsed})
    rows = [
        {"t": t, "eps": e, "l2": rep.l2[e][i], "linf": rep.linf[e][i], "Ebar": rep.ebar[e][i]}
        for e in rep.eps
        for i, t in enumerate(rep.times)
    ]
    write_csv(args.out / "limit_series.csv", ["t", "eps", "l2", "linf", "Ebar"], rows)
    for e, a, b in zip(rep.eps, rep.sup_l2, rep.sup_linf):
        print(f"eps={e:.0e}  sup L2 {a:.3e}  sup Linf {b:.3e}")
    if rep.slope_l2 is not None:
        print(f"slopes: L2 {rep.slope_l2:.3f}, Linf {rep.slope_linf:.3f}")
    print(f"{'PASS' if rep.passed else 'FAIL'} in {elapsed:.0f}s -> {args.out}")


if __name__ == "__main__":
    main()
