#!/usr/bin/env python3
"""Run the unmitigated baseline plus all four strategies and print the table.

Desk-scale analog of the mitigation comparison: per-strategy improvement
percentages with Welch p-values against the shared baseline, written as
summary folders plus a combined improvements.json.
"""

import argparse
import dataclasses
import json
from pathlib import Path

from recloop import (
    ExperimentConfig,
    MitigationConfig,
    ModelParams,
    SyntheticSpec,
    compare_runs,
    run_experiment,
)

STRATEGIES = {
    "ua_alpha": dict(strategy="ua_alpha", sigma=10.0),
    "fua": dict(strategy="fua", rho=0.02),
    "dpp": dict(strategy="dpp", theta=0.501, candidate_count=1000),
    "sar": dict(strategy="sar", omega=10.0, sar_strict_denominator=True),
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
    return parser.parse_args()


def main():
    args = parse_args()
    seeds = tuple(int(s) for s in args.seeds.split(","))
    base_config = ExperimentConfig(
        seeds=seeds,
        steps=args.steps,
        synthetic=SyntheticSpec(n=args.n, m=args.m, c=args.c, links=args.links),
        params=ModelParams(),
        ts_k=min(50, args.n - 1),
    )
    out = Path(args.out_dir)
    print("running baseline ...")
    baseline = run_experiment(base_config, out / "baseline")

    tables = {}
    for name, knobs in STRATEGIES.items():
        print(f"running {name} ...")
        config = dataclasses.replace(
            base_config, mitigation=MitigationConfig(**knobs))
        summary = run_experiment(config, out / name)
        rows = compare_runs(summary, baseline)
        tables[name] = [dataclasses.asdict(r) for r in rows]
        print(f"  {'metric':9s} {'improv%':>8s} {'p':>6s}")
        for row in rows:
            p = "n/a" if row.p_value is None else f"{row.p_value:.3f}"
            print(f"  {row.metric:9s} {row.improvement_pct:8.2f} {p:>6s}")

    with open(out / "improvements.json", "w", encoding="utf-8") as handle:
        json.dump(tables, handle, indent=2, sort_keys=True)
        handle.write("\n")
    print(f"wrote {out / 'improvements.json'}")


if __name__ == "__main__":
    main()
