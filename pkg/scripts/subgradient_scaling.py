#!/usr/bin/env python3
"""Wall-clock scaling of the closed-form gradients in ground-set size.

    python3 scripts/subgradient_scaling.py --horizons 1000 3000 10000 30000
"""

import argparse
import time

import numpy as np

from dsfnilm.bounds import permutation_from_set, subgradient_h, supergradient_g
from dsfnilm.setfn import random_assignment
from dsfnilm.verify import random_instance


def median_seconds(fn, reps):
    out = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return float(np.median(out))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--horizons", type=int, nargs="+", default=[1000, 3000, 10000, 30000])
    ap.add_argument("--lines", type=int, default=2)
    ap.add_argument("--reps", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'elements':>10} {'lines':>5} {'sub_ms':>9} {'ns/elem':>9} {'super_ms':>9} {'ns/elem':>9}")
    for T in args.horizons:
        rng = np.random.default_rng(args.seed)
        inst = random_instance(rng, 4, (3, 3, 2, 2), T, args.lines)
        Y = random_assignment(inst.model, T, rng)
        pi = permutation_from_set(inst, Y, args.seed)
        n = inst.ground_size
        t_sub = median_seconds(lambda: subgradient_h(inst, Y, pi), args.reps)
        t_sup = median_seconds(lambda: supergradient_g(inst, Y), args.reps)
        print(f"{n:>10} {args.lines:>5} {1e3 * t_sub:>9.3f} {1e9 * t_sub / n:>9.1f} "
              f"{1e3 * t_sup:>9.3f} {1e9 * t_sup / n:>9.1f}")


if __name__ == "__main__":
    main()
