"""Command-line entry point: ``tcpsim run|sweep|exp3|analyze|plotdata``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .errors import (ConfigurationError, InputError, InvariantViolation, ProtocolViolation,
                     TraceParseError)
from .metrics import TraceAnalyzer
from .tracing import read_trace_file
from .transport import parse_variant

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INVARIANT = 3
EXIT_INPUT = 4


def parse_rates(text: str) -> list[float]:
    """``"5"`` -> [5.0]; ``"1:12:1"`` -> [1.0, ..., 12.0]; ``"1,3,8"`` -> list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise argparse.ArgumentTypeError(f"bad rate range {text!r}, expected a:b[:step]")
        try:
            lo, hi = float(parts[0]), float(parts[1])
            step = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad rate range {text!r}") from None
        if step <= 0 or hi < lo:
            raise argparse.ArgumentTypeError(f"bad rate range {text!r}")
        n = int(round((hi - lo) / step + 1e-9))
        return [round(lo + i * step, 9) for i in range(n + 1)]
    try:
        rates = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad rate list {text!r}") from None
    if not rates or any(r < 0 for r in rates):
        raise argparse.ArgumentTypeError(f"bad rate list {text!r}")
    return rates


def _variant(text):
    try:
        return parse_variant(text)
    except InputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _variant_list(text):
    return [_variant(v) for v in text.split(",") if v.strip()]


def _pair(text):
    vs = _variant_list(text)
    if len(vs) != 2:
        raise argparse.ArgumentTypeError(f"a pair needs two variants, got {text!r}")
    return tuple(vs)


def _pairs(text):
    return [_pair(p) for p in text.split(";") if p.strip()]


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value file overriding scenario defaults")
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--queue", choices=("droptail", "red"))
    p.add_argument("--bucket", type=float, help="time-series bucket width, seconds")
    p.add_argument("--out-dir", default="out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tcpsim",
                                     description="Discrete-event TCP/CBR dumbbell simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="one scenario: trace, metrics CSV, metadata")
    _common(run)
    run.add_argument("--experiment", type=int, choices=(1, 2, 3), default=1)
    run.add_argument("--variant", type=_variant)
    run.add_argument("--pair", type=_pair, help="two variants for experiment 2, e.g. reno,vegas")
    run.add_argument("--cbr", type=float, help="CBR rate, Mbps")

    sweep = sub.add_parser("sweep", help="experiment 1 or 2 grid over CBR rates")
    _common(sweep)
    sweep.add_argument("--experiment", type=int, choices=(1, 2), default=1)
    sweep.add_argument("--variants", type=_variant_list,
                       default=list(ex.EXP1_VARIANTS))
    sweep.add_argument("--pairs", type=_pairs,
                       help="';'-separated pairs for experiment 2 (default: all four)")
    sweep.add_argument("--pair", type=_pair, help="single pair for experiment 2")
    sweep.add_argument("--cbr", type=parse_rates, default=list(ex.DEFAULT_RATES),
                       help="rates as a:b:step or a comma list (default 1:12:1)")
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.add_argument("--no-traces", action="store_true")

    exp3 = sub.add_parser("exp3", help="DropTail vs RED time series")
    _common(exp3)
    exp3.add_argument("--variants", type=_variant_list, default=list(ex.EXP3_VARIANTS))
    exp3.add_argument("--variant", type=_variant)
    exp3.add_argument("--cbr", type=float, default=ex.EXP3_CBR_MBPS)

    analyze = sub.add_parser("analyze", help="metrics from an existing trace file")
    analyze.add_argument("trace")
    analyze.add_argument("--flow", type=int, action="append",
                         help="flow id (repeatable; default: all flows)")
    analyze.add_argument("--start", type=float, default=0.0)
    analyze.add_argument("--end", type=float)

    plot = sub.add_parser("plotdata", help="metrics CSV -> gnuplot .dat files")
    plot.add_argument("csv")
    plot.add_argument("--out-dir", default=None)
    return parser


def _base_config(args, **overrides) -> ex.ScenarioConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(ex.load_config(args.config))
    for key in ("seed", "duration", "queue", "bucket"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ex.ScenarioConfig(**values)


def cmd_run(args) -> int:
    exp = args.experiment
    overrides = {"experiment": exp, "cbr_mbps": args.cbr}
    if exp == 2:
        if args.variant is not None:
            raise ConfigurationError("experiment 2 takes --pair, not --variant")
        overrides["pair"] = args.pair or ("reno", "reno")
    else:
        if args.pair is not None:
            raise ConfigurationError(f"experiment {exp} takes --variant, not --pair")
        overrides["variant"] = args.variant
    if exp == 3 and args.cbr is None:
        overrides["cbr_mbps"] = ex.EXP3_CBR_MBPS
    cfg = _base_config(args, **overrides)
    out = Path(args.out_dir)
    res = ex.run_scenario(cfg, out / "trace.tr")
    ex.write_csv(out / "metrics.csv", res.csv_rows())
    ex.write_metadata(out / "meta", cfg.metadata())
    for row in res.csv_rows():
        print(",".join(str(row[c]) for c in ex.CSV_COLUMNS))
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = _base_config(args)
    out = Path(args.out_dir)
    traces = not args.no_traces
    if args.experiment == 1:
        cells = ex.run_exp1_sweep(args.variants, args.cbr, base.seed, out, base,
                                  args.jobs, traces)
    else:
        pairs = args.pairs or ([args.pair] if args.pair else list(ex.EXP2_PAIRS))
        cells = ex.run_exp2_sweep(pairs, args.cbr, base.seed, out, base, args.jobs, traces)
    failed = [c for c in cells if c.error]
    print(f"{len(cells)} cells, {len(failed)} failed; results in {out}")
    return EXIT_INVARIANT if failed else EXIT_OK


def cmd_exp3(args) -> int:
    base = _base_config(args)
    variants = [args.variant] if args.variant else args.variants
    out = Path(args.out_dir)
    for v in variants:
        for q in ([args.queue] if args.queue else ["droptail", "red"]):
            r = ex.run_exp3(v, q, base.seed, base, out, cbr_mbps=args.cbr)
            t0, t1 = r.config.measurement_interval()
            st = r.run.stats
            lat = st[ex.TCP_A].avg_latency
            print(f"{v} {q}: tcp {st[ex.TCP_A].throughput:.3f} Mbps, "
                  f"cbr {st[ex.CBR_FLOW].throughput:.3f} Mbps, "
                  f"tcp latency {'NA' if lat is None else f'{lat:.4f} s'} "
                  f"over [{t0:g}, {t1:g})")
    return EXIT_OK


def cmd_analyze(args) -> int:
    an = TraceAnalyzer().extend(read_trace_file(args.trace))
    end = args.end if args.end is not None else an.end_time
    interval = (args.start, end)
    fids = args.flow or an.flow_ids()
    print("flow_id,sent,received,dropped,throughput_mbps,latency_s,drop_fraction")
    for fid in fids:
        st = an.flow_stats(fid, interval)
        lat = "NA" if st.avg_latency is None else f"{st.avg_latency:.6f}"
        print(f"{fid},{st.sent_packets},{st.received_packets},{st.dropped_packets},"
              f"{st.throughput:.6f},{lat},{st.drop_rate:.6f}")
    return EXIT_OK


def cmd_plotdata(args) -> int:
    rows = ex.read_csv(args.csv)
    out = Path(args.out_dir) if args.out_dir else Path(args.csv).parent
    for p in ex.write_plot_data(rows, out, comment=f"from {Path(args.csv).name}"):
        print(p)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "exp3": cmd_exp3,
            "analyze": cmd_analyze, "plotdata": cmd_plotdata}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        parser.error(str(exc))   # exits with EXIT_USAGE
    except (InvariantViolation, ProtocolViolation) as exc:
        print(f"tcpsim: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (InputError, TraceParseError, OSError) as exc:
        print(f"tcpsim: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
