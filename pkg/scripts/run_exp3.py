#!/usr/bin/env python3
"""Experiment 3: Reno and SACK over DropTail and RED, as time series."""
import argparse

from tcpsim.experiments import EXP3_CBR_MBPS, EXP3_VARIANTS, TCP_A, CBR_FLOW, run_exp3
from tcpsim.metrics import jain_index


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/exp3")
    ap.add_argument("--cbr", type=float, default=EXP3_CBR_MBPS)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    for v in EXP3_VARIANTS:
        for q in ("droptail", "red"):
            r = run_exp3(v, q, args.seed, out_dir=args.out_dir, cbr_mbps=args.cbr)
            st = r.run.stats
            tcp, cbr = st[TCP_A].throughput, st[CBR_FLOW].throughput
            print(f"{v:5s} {q:8s} tcp {tcp:.3f} cbr {cbr:.3f} Mbps  "
                  f"jain {jain_index([tcp, cbr]):.3f}  tcp latency {st[TCP_A].avg_latency:.4f} s")


if __name__ == "__main__":
    main()
