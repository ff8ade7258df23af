#!/usr/bin/env python3
"""Experiment 2: pairs of TCP variants sharing the bottleneck with CBR."""
import argparse

from tcpsim.cli import parse_rates
from tcpsim.experiments import DEFAULT_RATES, EXP2_PAIRS, ScenarioConfig, run_exp2_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/exp2")
    ap.add_argument("--cbr", type=parse_rates, default=list(DEFAULT_RATES))
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--traces", action="store_true")
    args = ap.parse_args()
    cells = run_exp2_sweep(EXP2_PAIRS, args.cbr, args.seed, args.out_dir, ScenarioConfig(),
                           args.jobs, args.traces)
    for c in cells:
        if c.fairness is None:
            continue
        a, b = c.config.pair
        print(f"{a}/{b:8s} cbr {c.config.cbr_mbps:4g}  jain {c.fairness.jain:.4f}  "
              f"ratio {c.fairness.ratio if c.fairness.ratio is None else round(c.fairness.ratio, 3)}")


if __name__ == "__main__":
    main()
