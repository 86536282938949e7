#!/usr/bin/env python3
"""Reproduce the likelihood-evaluation scaling table across grid sizes.

Usage: python scripts/bench_scaling.py [--reps 25] [--seed 0]
"""

import argparse
import json

from gridloc.bench import run_benchmark

GRIDS = [(4, 11, 11), (4, 33, 33), (8, 33, 33), (24, 33, 33)]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=25)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="optional JSON output path")
    args = parser.parse_args()

    table = run_benchmark(GRIDS, reps=args.reps, seed=args.seed)
    print(f"{'grid':>10} {'SM (ms)':>10} {'AML (ms)':>10}")
    for row in table:
        print(f"{row['grid']:>10} {row['sm_mean_s'] * 1e3:>10.3f} "
              f"{row['aml_mean_s'] * 1e3:>10.3f}")
    ratio = table[2]["sm_mean_s"] / table[1]["sm_mean_s"]
    print(f"\n8x33x33 / 4x33x33 SM ratio: {ratio:.3f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(table, f, indent=2)


if __name__ == "__main__":
    main()
