#!/usr/bin/env python3
"""Scan the corner-jump family over lambda and locate the semicontinuity
threshold on the unit square (expected at -sqrt(2)/2 for sigma = 1).

Writes sweep.csv / sweep.dat and report.json under --out.
"""

import argparse
import math

from bvcontact.cli import run_scenario


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out/threshold_scan")
    ap.add_argument("--lam-min", type=float, default=-1.0)
    ap.add_argument("--lam-max", type=float, default=0.0)
    ap.add_argument("--step", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    scenario = {
        "task": "counterexample",
        "domain": "square",
        "density": "linear:-0.8",
        "sigma": 1.0,
        "seed": args.seed,
        "grid_h": 1 / 512,
        "params": {
            "family": "E1",
            "lam_sweep": [args.lam_min, args.lam_max, args.step],
            "n_values": [4, 8, 16, 32],
            "grid_check_n": 8,
        },
    }
    rep = run_scenario(scenario, args.out)
    print(f"threshold scan written to {args.out}")
    print(f"expected flip near lambda = -sqrt(2)/2 = {-math.sqrt(2) / 2:.6f}")
    print(f"grid check: {rep['result']['last_catalog']['grid_checks']}")


if __name__ == "__main__":
    main()
