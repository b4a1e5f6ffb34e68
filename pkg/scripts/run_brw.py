#!/usr/bin/env python3
"""Branching random walk from p particles: progeny law and R/N concentration."""
import argparse
from pathlib import Path

import numpy as np

from treerange import brw
from treerange.distributions import make_geometric_critical, make_jump_srw


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/brw"))
    ap.add_argument("--seed", type=int, default=700)
    ap.add_argument("--reps", type=int, default=10_000)
    ap.add_argument("--ratio-reps", type=int, default=300)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    mu, theta = make_geometric_critical(), make_jump_srw(5)

    runs = brw.brw_replicas(100, mu, None, args.reps, args.seed, workers=args.workers)
    ks = brw.ks_progeny(runs, 100, mu.variance)
    np.savetxt(args.out / "progeny_p100.txt", [r.progeny for r in runs], fmt="%d")
    print(f"KS N/p^2 vs J/2 at p=100: D={ks['ks']:.4f} p={ks['p_value']:.4f} truncated={ks['truncated']}")

    for p in (10, 100):
        r = brw.ratio_experiment(p, mu, theta, args.ratio_reps, args.seed + p, workers=args.workers)
        np.savetxt(args.out / f"ratio_p{p}.txt", np.column_stack([r["ratio"], r["n_scaled"]]))
        print(f"d=5 p={p:>3d}: mean R/N {r['ratio_mean']:.4f}  IQR {r['ratio_iqr']:.4f}  truncated {r['truncated']}")


if __name__ == "__main__":
    main()
