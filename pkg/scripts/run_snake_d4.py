#!/usr/bin/env python3
"""(log n / n) E[R_n] for the free snake and the excursion in Z^4."""
import argparse
import math
from pathlib import Path

from _common import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/snake_d4"))
    ap.add_argument("--seed", type=int, default=600)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()

    sizes = {10 ** 4: 50, 10 ** 5: 20} if args.quick else {10 ** 5: 1000, 10 ** 6: 200, 10 ** 7: 30}
    target = math.pi ** 2 / 4
    for i, (n, reps) in enumerate(sizes.items()):
        r = run_experiment(args.out, f"free_{n}", experiment="snake-free", dim=4, n=n, reps=reps,
                           seed=args.seed + i, workers=args.workers)
        print(f"free      n={n:>9d}  {r['value']:.4f} +- {r['stderr']:.4f}  distance {abs(r['value'] - target):.4f}")
    n_exc, reps_exc = (10 ** 4, 50) if args.quick else (10 ** 6, 50)
    r = run_experiment(args.out, f"excursion_{n_exc}", experiment="snake-excursion", dim=4, n=n_exc,
                       reps=reps_exc, seed=args.seed + 10, workers=args.workers)
    print(f"excursion n={n_exc:>9d}  {r['value']:.4f} +- {r['stderr']:.4f}  target {math.pi ** 2 / 2:.4f}")


if __name__ == "__main__":
    main()
