#!/usr/bin/env python3
"""Exact k P(head_k = 0) for SRW in Z^4 and |x|^2 G(x) along an axis."""
import argparse
import math

import numpy as np

from treerange import analytics, snake
from treerange.distributions import make_jump_srw


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kmax", type=int, default=10_000)
    args = ap.parse_args()
    theta = make_jump_srw(4)
    ks = [k for k in (10, 100, 1000, 10_000, 100_000) if k <= args.kmax]
    ks += [k + 1 for k in ks]
    tab = snake.head_return_table(theta, sorted(ks))
    print(f"target 4/pi^2 = {4 / math.pi ** 2:.5f} (8/pi^2 along even k = {8 / math.pi ** 2:.5f})")
    for k in sorted(tab):
        print(f"k={k:>7d}  k P = {tab[k]:.6f}")
    print(f"\n|x|^2 G(x), target 2/pi^2 = {2 / math.pi ** 2:.6f}")
    for r in (5, 10, 20, 40, 80):
        g = analytics.green(theta, np.array([r, 0, 0, 0]))
        print(f"|x|={r:>3d}  {r * r * g.value:.6f}")


if __name__ == "__main__":
    main()
