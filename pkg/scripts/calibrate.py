#!/usr/bin/env python3
"""Null rejection rates of every statistical test, written as JSON."""

import argparse
import json

from mqlab.calibration import NULL_TRIALS, null_rejection_rate
from mqlab.procgen import RngStream


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--alpha", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=20261014)
    ap.add_argument("--tests", default=",".join(NULL_TRIALS), help="comma-separated test names")
    ap.add_argument("--out", default=None, help="JSON output path (default: stdout only)")
    args = ap.parse_args()

    results = []
    for i, name in enumerate(t.strip() for t in args.tests.split(",")):
        res = null_rejection_rate(name, args.trials, RngStream(args.seed, i), args.alpha)
        print(f"{name:32s} {res.rejections:4d}/{res.trials} rate={res.rate:.4f}")
        results.append(res.to_dict())
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
