"""Decay of the tangential energy for small data on the desk grid.

Writes decay_series.csv and decay_report.json to --out.
"""

import argparse
import time
from pathlib import Path

from conormal_mhd.conormal import ConormalConfig
from conormal_mhd.dynamics import SolverConfig
from conormal_mhd.experiments import InitialDataSpec, desk_grid_spec, run_decay_study
from conormal_mhd.io import write_csv, write_json
from conormal_mhd.spectral import plan_grid


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=64, help="horizontal points per direction")
    p.add_argument("--n3", type=int, default=17)
    p.add_argument("--t-end", type=float, default=50.0)
    p.add_argument("--amplitude", type=float, default=1e-3)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("out/decay"))
    args = p.parse_args()

    grid = plan_grid(desk_grid_spec(args.n, args.n, args.n3))
    data = InitialDataSpec(seed=args.seed, amplitude=args.amplitude, k_max=1.0)
    t0 = time.perf_counter()
    rep = run_decay_study(data, grid, SolverConfig(t_end=args.t_end), ConormalConfig(), eps=args.eps)
    elapsed = time.perf_counter() - t0

    args.out.mkdir(parents=True, exist_ok=True)
    rows = [
        {"t": t, "E_tan_m1": e, "weighted_E_tan_m1": w, "weighted_D_integral": i}
        for t, e, w, i in zip(rep.times, rep.e_tan, rep.weighted_e, rep.weighted_integral)
    ]
    write_csv(args.out / "decay_series.csv", list(rows[0]), rows)
    write_json(args.out / "decay_report.json", {**rep.to_dict(), "elapsed_s": elapsed})
    if rep.exponent is None:
        print(f"too few samples in {rep.fit_window} to fit an exponent")
    else:
        print(f"exponent {rep.exponent:.3f} over {rep.fit_window}")
    print(f"envelope ratio {rep.envelope_ratio:.3f}, integral ratio {rep.integral_ratio:.3f}")
    print(f"{'PASS' if rep.passed else 'FAIL'} in {elapsed:.0f}s -> {args.out}")


if __name__ == "__main__":
    main()
