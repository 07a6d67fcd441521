#!/usr/bin/env python3
"""Adjacent-label match probability for a range of class counts, with a 1/m fit."""

import argparse

import numpy as np

from mqlab.particle_bridge import exact_adjacent_match_m3, label_clustering
from mqlab.procgen import RngStream


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ms", default="6,12,24,48")
    ap.add_argument("--slots", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=20261014)
    args = ap.parse_args()
    ms = tuple(int(m) for m in args.ms.split(","))

    rep = label_clustering(ms, args.slots, RngStream(args.seed, 0))
    ests = [t.statistic for t in rep.tests[: len(ms)]]
    print(f"m=3   exact {float(exact_adjacent_match_m3()):.4f}")
    for m, e in zip(ms, ests):
        print(f"m={m:<3d} estimate {e:.4f}  gap to 1/6 {e - 1 / 6:+.4f}")
    slope, icpt = np.polyfit(1 / np.asarray(ms, float), ests, 1)
    print(f"fit p(m) ~ {icpt:.4f} + {slope:.3f}/m")


if __name__ == "__main__":
    main()
