#!/usr/bin/env python3
"""Sweep the four model knobs on the synthetic world and dump plot-ready CSVs.

Desk-scale analog of the temporal-trend figures: one sweep per parameter,
holding the others at their defaults. Output lands under --out-dir as
<axis>/sweep.csv plus per-value metrics and summaries.
"""

import argparse
from pathlib import Path

from recloop import ExperimentConfig, ModelParams, SyntheticSpec, sweep

SWEEPS = {
    "alpha": [0.0, 1.0, 5.0, 20.0],
    "beta": [0.0, 1.0, 5.0, 10.0],
    "gamma": [0.0, 0.25, 0.5, 1.0],
    "epsilon": [-0.2, 0.0, 0.2, 0.5],
}


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--n", type=int, default=100)
    parser.add_argument("--m", type=int, default=1000)
    parser.add_argument("--c", type=int, default=10)
    parser.add_argument("--links", type=int, default=1000)
    parser.add_argument("--steps", type=int, default=300)
    parser.add_argument("--seeds", default="1,2,3,4,5,6,7,8,9,10")
    parser.add_argument("--axes", default="alpha,beta,gamma,epsilon",
                        help="comma-separated subset of the sweepable axes")
    return parser.parse_args()


def main():
    args = parse_args()
    seeds = tuple(int(s) for s in args.seeds.split(","))
    config = ExperimentConfig(
        seeds=seeds,
        steps=args.steps,
        synthetic=SyntheticSpec(n=args.n, m=args.m, c=args.c, links=args.links),
        params=ModelParams(),
        ts_k=min(50, args.n - 1),
    )
    out = Path(args.out_dir)
    for axis in args.axes.split(","):
        values = SWEEPS[axis]
        print(f"sweeping {axis} over {values} ...")
        sweep(config, axis, values, out / axis)
    print(f"done; long-format CSVs in {out}/<axis>/sweep.csv")


if __name__ == "__main__":
    main()
