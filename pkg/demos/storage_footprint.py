"""History storage of the compressed solver against the full snapshot matrix.

The compressed rank is limited from below by roundoff in the computed
snapshots: their singular values level off near ``1e-15 * ||U||``. A
tolerance at or under that floor keeps admitting noise directions, so the
sweep shows how the footprint depends on ``tol``.

    python3 demos/storage_footprint.py [--grid 30] [--dt 1e-3]
"""
import argparse

import numpy as np

from oldroyd_isvd.problems import example1
from oldroyd_isvd.stepper import run

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", type=int, default=30)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--T", type=float, default=0.5)
    args = ap.parse_args()

    cfg, prob = example1(args.grid, dt_rule=args.dt, T=args.T, mode="full")
    rep = run(cfg, prob)
    U = rep.tracks["full"].store.U[:, :rep.grid.N + 1]
    s = np.linalg.svd(U, compute_uv=False)
    print(f"m={rep.m} N={rep.grid.N} ||U||={s[0]:.3e}")
    print("leading singular values:", " ".join(f"{x:.1e}" for x in s[:40]))

    full_floats = rep.m * rep.grid.N
    print(f"\n{'tol':>8} {'rank':>5} {'T_sv':>5} {'peak floats':>12} {'% of mN':>8} {'seconds':>8}")
    for tol in (1e-12, 1e-11, 1e-10, 1e-8):
        cfg, prob = example1(args.grid, dt_rule=args.dt, T=args.T, mode="compressed", tol=tol)
        comp = run(cfg, prob)
        tr = comp.tracks["compressed"]
        print(f"{tol:>8.0e} {tr.rank:>5} {tr.T_sv:>5} {tr.peak_floats:>12} "
              f"{100 * tr.peak_floats / full_floats:>7.2f}% {comp.wall_time:>8.1f}")
