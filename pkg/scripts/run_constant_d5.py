#!/usr/bin/env python3
"""Three estimators of c_{mu,theta} in d = 5 plus the conditioned-tree estimate.

Writes one CSV per estimator and prints the pairwise |difference| / stderr.
"""
import argparse
import itertools
import math
from pathlib import Path

from _common import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/constant_d5"))
    ap.add_argument("--seed", type=int, default=500)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--quick", action="store_true", help="small sizes for a smoke run")
    args = ap.parse_args()

    n, horizon, jmax, ncond = (10 ** 4, 10 ** 4, 10 ** 3, 10 ** 3) if args.quick else (10 ** 6, 10 ** 6, 10 ** 4, 10 ** 5)
    reps = (10, 200, 200, 50) if args.quick else (100, 2000, 2000, 1000)
    trees = 2000 if args.quick else 40_000
    common = dict(dim=5, workers=args.workers)

    res = {
        "range": run_experiment(args.out, "infinite_range", experiment="infinite-range", n=n, reps=reps[0],
                                seed=args.seed + 1, options={"checkpoints": [n // 100, n // 10]}, **common),
        "no-return": run_experiment(args.out, "no_return", experiment="no-return", horizon=horizon,
                                    reps=reps[1], seed=args.seed + 2, **common),
        "formula": run_experiment(args.out, "constant_formula", experiment="constant-formula", j_max=jmax,
                                  reps=reps[2], seed=args.seed + 4,
                                  options={"L": 10, "trees": trees, "table_seed": args.seed + 3}, **common),
    }
    cond = run_experiment(args.out, "conditioned_range", experiment="conditioned-range", n=ncond, reps=reps[3],
                          seed=args.seed + 5, **common)

    for name, r in res.items():
        print(f"{name:10s} {r['value']:.5f} +- {r['stderr']:.5f}  ({r['elapsed_s']:.0f}s)")
    print(f"{'conditioned':10s} {cond['value']:.5f} +- {cond['stderr']:.5f}")
    for a, b in itertools.combinations(res, 2):
        z = abs(res[a]["value"] - res[b]["value"]) / math.hypot(res[a]["stderr"], res[b]["stderr"])
        print(f"{a} vs {b}: {z:.2f} combined stderr")


if __name__ == "__main__":
    main()
