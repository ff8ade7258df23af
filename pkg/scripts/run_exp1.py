#!/usr/bin/env python3
"""Experiment 1: one TCP flow against a CBR sweep, for each variant.

Writes metrics.csv, throughput.dat, droprate.dat, latency.dat and meta.
"""
import argparse

from tcpsim.cli import parse_rates
from tcpsim.experiments import DEFAULT_RATES, EXP1_VARIANTS, ScenarioConfig, run_exp1_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/exp1")
    ap.add_argument("--cbr", type=parse_rates, default=list(DEFAULT_RATES))
    ap.add_argument("--variants", default=",".join(EXP1_VARIANTS))
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--traces", action="store_true", help="keep one .tr file per cell")
    args = ap.parse_args()
    variants = args.variants.split(",")
    cells = run_exp1_sweep(variants, args.cbr, args.seed, args.out_dir, ScenarioConfig(),
                           args.jobs, args.traces)
    for c in cells:
        tcp = c.rows[0] if c.rows else None
        if tcp:
            print(f"{tcp['variant']:8s} cbr {tcp['cbr_mbps']:>4s}  "
                  f"th {float(tcp['throughput_mbps']):6.3f} Mbps  "
                  f"drop {float(tcp['drop_fraction']):.3f}  latency {tcp['latency_s']}")


if __name__ == "__main__":
    main()
