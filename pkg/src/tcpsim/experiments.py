"""Scenario wiring for the three experiments, sweeps, and output files.

Experiment 1: one TCP flow N1->N4 against CBR N2->N3, CBR rate swept.
Experiment 2: two TCP flows N1->N4 and N5->N6 against CBR N2->N3.
Experiment 3: one TCP flow N1->N4, CBR N5->N6 started once TCP is up,
              DropTail or RED on the bottleneck.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .engine import Simulator
from .errors import ConfigurationError, InputError, InvariantViolation, ProtocolViolation
from .metrics import (LATENCY, THROUGHPUT, AnalyzerSink, FlowStats, TraceAnalyzer,
                      fairness)
from .netgraph import N1, N2, N3, N4, N5, N6, DropTail, Network, Red, build_dumbbell
from .tracing import TraceWriter
from .transport import (CbrAgent, CbrSource, NullSink, TcpAgent, TcpParams,
                        TcpSinkAgent, parse_variant)

log = logging.getLogger(__name__)

TCP_A, TCP_B, CBR_FLOW = 1, 2, 3
EXP1_VARIANTS = ("tahoe", "reno", "newreno", "vegas")
EXP2_PAIRS = (("reno", "reno"), ("newreno", "reno"), ("vegas", "vegas"), ("newreno", "vegas"))
EXP3_VARIANTS = ("reno", "sack")
DEFAULT_RATES = tuple(float(r) for r in range(1, 13))
EXP3_CBR_MBPS = 9.5   # enough to overflow the bottleneck next to a window-limited TCP flow

CSV_COLUMNS = ("scenario", "variant", "cbr_mbps", "queue_kind", "flow_id",
               "throughput_mbps", "latency_s", "drop_fraction", "drop_count")


@dataclass
class ScenarioConfig:
    experiment: int = 1
    variant: str = "reno"
    pair: tuple[str, str] | None = None
    cbr_mbps: float = 5.0
    queue: str = "droptail"
    seed: int = 1
    duration: float = 30.0
    cbr_start: float | None = None     # None: 0 s for experiments 1-2, 5 s for experiment 3
    cbr_jitter: float = 0.0            # max random offset added to the CBR start, seconds
    tcp_start: float = 0.0
    tcp_b_start: float = 0.0
    tcp_overhead: float = 0.0008       # max random per-segment send delay, seconds
    bandwidth_mbps: float = 10.0
    delay_ms: float = 10.0
    queue_limit: int = 150
    edge_queue_limit: int = 50
    red_min_th: float = 5.0
    red_max_th: float = 15.0
    red_max_p: float = 0.02
    red_w_q: float = 0.002
    window: int = 20
    segment_size: int = 1000
    ack_size: int = 40
    cbr_packet_size: int = 1000
    init_ssthresh: float = 64.0
    rto_init: float = 1.0
    rto_min: float = 0.2
    rto_max: float = 64.0
    vegas_alpha: float = 2.0
    vegas_beta: float = 2.0
    vegas_gamma: float = 1.0
    warmup: float = 2.0
    bucket: float = 0.5

    def __post_init__(self):
        if self.experiment not in (1, 2, 3):
            raise ConfigurationError(f"experiment must be 1, 2 or 3, not {self.experiment}")
        self.queue = self.queue.lower()
        if self.queue not in ("droptail", "red"):
            raise ConfigurationError(f"unknown queue kind {self.queue!r}")
        if self.experiment == 2:
            if self.pair is None:
                raise ConfigurationError("experiment 2 needs a variant pair")
            self.pair = tuple(parse_variant(v) for v in self.pair)
            if len(self.pair) != 2:
                raise ConfigurationError("a pair has exactly two variants")
        else:
            if self.pair is not None:
                raise ConfigurationError(
                    f"experiment {self.experiment} runs a single TCP flow, not a pair")
            self.variant = parse_variant(self.variant)
        if not self.duration > 0:
            raise ConfigurationError("duration must be positive")
        if not self.cbr_mbps >= 0:
            raise ConfigurationError("CBR rate must be non-negative")

    @property
    def effective_cbr_start(self) -> float:
        if self.cbr_start is not None:
            return self.cbr_start
        return 5.0 if self.experiment == 3 else 0.0

    @property
    def variants(self) -> tuple[str, ...]:
        return self.pair if self.experiment == 2 else (self.variant,)

    @property
    def scenario_id(self) -> str:
        v = "+".join(self.variants)
        return f"exp{self.experiment}-{v}-cbr{self.cbr_mbps:g}-{self.queue}-s{self.seed}"

    def measurement_interval(self) -> tuple[float, float]:
        if self.experiment == 3:
            return (self.effective_cbr_start, self.duration)
        return (min(self.warmup, self.duration / 2), self.duration)

    def tcp_params(self) -> TcpParams:
        return TcpParams(segment_size=self.segment_size, ack_size=self.ack_size,
                         window=self.window, init_ssthresh=self.init_ssthresh,
                         rto_init=self.rto_init, rto_min=self.rto_min, rto_max=self.rto_max,
                         vegas_alpha=self.vegas_alpha, vegas_beta=self.vegas_beta,
                         vegas_gamma=self.vegas_gamma)

    def bottleneck_queue(self):
        if self.queue == "red":
            return Red(self.queue_limit, self.red_min_th, self.red_max_th,
                       self.red_max_p, self.red_w_q)
        return DropTail(self.queue_limit)

    def metadata(self) -> dict:
        meta = dataclasses.asdict(self)
        meta["pair"] = ",".join(self.pair) if self.pair else ""
        meta["cbr_start"] = self.effective_cbr_start
        meta["scenario"] = self.scenario_id
        meta["measure_from"], meta["measure_to"] = self.measurement_interval()
        meta["topology"] = "dumbbell N1,N5-N2-N3-N4,N6; bottleneck N2-N3"
        meta["rng"] = "python random.Random (MT19937)"
        meta["ack_policy"] = "immediate"
        return meta

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------- config IO

def _coerce(f: dataclasses.Field, raw: str):
    name, text = f.name, raw.strip()
    if name == "pair":
        return tuple(x.strip() for x in text.split(",")) if text else None
    if name == "cbr_start":
        return None if text.lower() in ("", "none", "default") else float(text)
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
    if kind.startswith("int"):
        return int(text)
    if kind.startswith("float"):
        return float(text)
    return text


def parse_config_text(text: str) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    fields = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not eq:
            raise ConfigurationError(f"config line {n}: expected key=value")
        if key not in fields:
            raise ConfigurationError(f"config line {n}: unknown key {key!r}")
        try:
            out[key] = _coerce(fields[key], value)
        except ValueError:
            raise ConfigurationError(f"config line {n}: bad value for {key}: {value!r}") from None
    return out


def load_config(path) -> dict:
    return parse_config_text(Path(path).read_text())


def format_metadata(meta: dict) -> str:
    return "".join(f"{k}={'' if v is None else v}\n" for k, v in meta.items())


# ------------------------------------------------------------------ wiring

@dataclass
class Flow:
    flow_id: int
    label: str          # variant name or "cbr"
    agent: object
    sink: object


@dataclass
class Scenario:
    config: ScenarioConfig
    sim: Simulator
    network: Network
    flows: list[Flow]
    analyzer: TraceAnalyzer
    cbr: CbrAgent

    def tcp_flows(self) -> list[Flow]:
        return [f for f in self.flows if f.label != "cbr"]


def build_scenario(cfg: ScenarioConfig, trace_stream=None) -> Scenario:
    sim = Simulator()
    rng = random.Random(cfg.seed)
    topo = build_dumbbell(cfg.bandwidth_mbps * 1e6, cfg.delay_ms / 1000,
                          cfg.bottleneck_queue(), DropTail(cfg.edge_queue_limit))
    net = Network(sim, topo, rng)
    analyzer = TraceAnalyzer()
    net.add_sink(AnalyzerSink(analyzer))
    if trace_stream is not None:
        net.add_sink(TraceWriter(trace_stream))

    params = cfg.tcp_params()
    flows = []

    def tcp(fid, variant, src, dst, start):
        agent = TcpAgent(net, fid, variant, (src, 0), (dst, 0), params, cfg.tcp_overhead)
        sink = TcpSinkAgent(net, dst, 0, sack=(variant == "sack"), ack_size=cfg.ack_size)
        sim.schedule(start, agent.start)
        flows.append(Flow(fid, variant, agent, sink))

    if cfg.experiment == 1:
        tcp(TCP_A, cfg.variant, N1, N4, cfg.tcp_start)
        cbr_src, cbr_dst = N2, N3
    elif cfg.experiment == 2:
        tcp(TCP_A, cfg.pair[0], N1, N4, cfg.tcp_start)
        tcp(TCP_B, cfg.pair[1], N5, N6, cfg.tcp_b_start)
        cbr_src, cbr_dst = N2, N3
    else:
        tcp(TCP_A, cfg.variant, N1, N4, cfg.tcp_start)
        cbr_src, cbr_dst = N5, N6

    # every (src, dst) pair must be routable before the run starts
    for f in flows:
        topo.route(f.agent.src_node, f.agent.dst_node)
        topo.route(f.agent.dst_node, f.agent.src_node)
    topo.route(cbr_src, cbr_dst)

    source = CbrSource(cfg.cbr_mbps * 1e6 if cfg.cbr_mbps > 0 else 1.0,
                       cfg.cbr_packet_size, cfg.effective_cbr_start, cfg.duration)
    cbr_port = 1 if cbr_src in (f.agent.src_node for f in flows) else 0
    cbr = CbrAgent(net, CBR_FLOW, source, (cbr_src, cbr_port), (cbr_dst, cbr_port))
    cbr_sink = NullSink(net, cbr_dst, cbr_port)
    if cfg.cbr_mbps > 0:
        jitter = rng.uniform(0, cfg.cbr_jitter) if cfg.cbr_jitter > 0 else 0.0
        cbr.schedule(jitter)
    flows.append(Flow(CBR_FLOW, "cbr", cbr, cbr_sink))
    return Scenario(cfg, sim, net, flows, analyzer, cbr)


@dataclass
class RunResult:
    config: ScenarioConfig
    stats: dict[int, FlowStats]
    labels: dict[int, str]
    analyzer: TraceAnalyzer = field(repr=False)
    events: int = 0
    conservation: dict[int, tuple[int, int, int, int]] = field(default_factory=dict)
    delivered_ok: dict[int, bool] = field(default_factory=dict)
    senders: dict[int, object] = field(default_factory=dict, repr=False)

    def csv_rows(self) -> list[dict]:
        cfg = self.config
        rows = []
        for fid in sorted(self.stats):
            st = self.stats[fid]
            rows.append({
                "scenario": cfg.scenario_id, "variant": self.labels[fid],
                "cbr_mbps": f"{cfg.cbr_mbps:g}", "queue_kind": cfg.queue, "flow_id": fid,
                "throughput_mbps": f"{st.throughput:.6f}",
                "latency_s": "NA" if st.avg_latency is None else f"{st.avg_latency:.6f}",
                "drop_fraction": f"{st.drop_rate:.6f}",
                "drop_count": st.dropped_packets,
            })
        return rows


def _check_conservation(scn: Scenario) -> dict:
    out = {}
    net = scn.network
    for f in scn.flows:
        mon = net.flows.get(f.flow_id)
        if mon is None:
            continue
        in_net = net.count_in_network(f.flow_id)
        network_drops = mon.dropped - mon.source_drops
        if mon.sent != mon.received + network_drops + in_net:
            raise InvariantViolation(
                f"flow {f.flow_id}: sent {mon.sent} != received {mon.received} + "
                f"dropped {network_drops} + in flight {in_net}")
        out[f.flow_id] = (mon.sent, mon.received, network_drops, in_net)
    return out


def _check_delivery(scn: Scenario) -> dict:
    out = {}
    for f in scn.tcp_flows():
        stream = f.sink.receiver.delivered
        ok = all(seq == i for i, seq in enumerate(stream))
        if not ok:
            raise InvariantViolation(f"flow {f.flow_id}: delivered stream has gaps or repeats")
        out[f.flow_id] = ok
    return out


def run_scenario(cfg: ScenarioConfig, trace_path=None) -> RunResult:
    if trace_path is not None:
        Path(trace_path).parent.mkdir(parents=True, exist_ok=True)
        with open(trace_path, "w", encoding="ascii", newline="\n") as fh:
            return _run(cfg, fh)
    return _run(cfg, None)


def _run(cfg, stream) -> RunResult:
    scn = build_scenario(cfg, stream)
    stats = scn.sim.run_until(cfg.duration)
    scn.sim.finish()
    interval = cfg.measurement_interval()
    result = RunResult(
        config=cfg,
        stats={f.flow_id: scn.analyzer.flow_stats(f.flow_id, interval) for f in scn.flows},
        labels={f.flow_id: f.label for f in scn.flows},
        analyzer=scn.analyzer,
        events=stats.events_processed,
        senders={f.flow_id: f.agent.sender for f in scn.tcp_flows()},
    )
    result.conservation = _check_conservation(scn)
    result.delivered_ok = _check_delivery(scn)
    return result


# ------------------------------------------------------------------ outputs

def write_csv(path, rows: Sequence[dict]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in CSV_COLUMNS})


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_dat(path, x_name: str, columns: Sequence[str], rows: Sequence[Sequence], comment=""):
    """Whitespace-separated table with a ``#`` header, as gnuplot expects."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("# " + " ".join([x_name, *columns]) + "\n")
        for row in rows:
            fh.write(" ".join(_dat_value(v) for v in row) + "\n")


def _dat_value(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NaN"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def write_metadata(path, meta: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_metadata(meta))


METRIC_FILES = {"throughput": "throughput_mbps", "droprate": "drop_fraction",
                "latency": "latency_s"}


def plot_tables(rows: Sequence[dict], flow_filter=None) -> dict[str, tuple[list, list]]:
    """Pivot CSV rows into {metric: (series names, [[cbr, v1, v2, ...], ...])}.

    One column per (variant, flow) series, rows sorted by CBR rate.  CBR
    flows are left out unless ``flow_filter`` selects them.
    """
    if flow_filter is None:
        def flow_filter(r):
            return r["variant"] != "cbr"
    series: list[str] = []
    table: dict[float, dict[str, dict]] = {}
    for r in rows:
        if not flow_filter(r):
            continue
        name = _series_name(r)
        if name not in series:
            series.append(name)
        table.setdefault(float(r["cbr_mbps"]), {})[name] = r
    out = {}
    for metric, col in METRIC_FILES.items():
        data = []
        for rate in sorted(table):
            line = [rate]
            for s in series:
                r = table[rate].get(s)
                line.append(None if r is None or r[col] in ("", "NA") else float(r[col]))
            data.append(line)
        out[metric] = (series, data)
    return out


def _series_name(row) -> str:
    scen = row["scenario"]
    # exp2 rows carry the pair in the scenario id; keep both flows apart
    if scen.startswith("exp2-"):
        pair = scen.split("-")[1]
        return f"{pair}:{row['variant']}#{row['flow_id']}"
    if row["queue_kind"] != "droptail":
        return f"{row['variant']}-{row['queue_kind']}"
    return row["variant"]


def write_plot_data(rows, out_dir, comment="") -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    for metric, (series, data) in plot_tables(rows).items():
        p = out_dir / f"{metric}.dat"
        write_dat(p, "cbr_mbps", series, data, comment or f"{metric} vs CBR rate")
        paths.append(p)
    return paths


# ------------------------------------------------------------------- sweeps

@dataclass
class CellResult:
    config: ScenarioConfig
    rows: list[dict]
    error: str | None = None
    fairness: tuple | None = None


def _run_cell(args) -> CellResult:
    cfg, trace_path = args
    try:
        res = run_scenario(cfg, trace_path)
    except (InvariantViolation, ProtocolViolation) as exc:
        log.error("cell %s failed: %s", cfg.scenario_id, exc)
        return CellResult(cfg, [], error=f"{type(exc).__name__}: {exc}")
    fair = None
    if cfg.experiment == 2:
        a, b = res.stats[TCP_A].throughput, res.stats[TCP_B].throughput
        fair = fairness(a, b) if (a or b) else None
    return CellResult(cfg, res.csv_rows(), fairness=fair)


def run_cells(configs: Sequence[ScenarioConfig], out_dir=None, jobs=1,
              traces=True) -> list[CellResult]:
    args = []
    for cfg in configs:
        trace = None
        if out_dir is not None and traces:
            trace = Path(out_dir) / "traces" / f"{cfg.scenario_id}.tr"
        args.append((cfg, trace))
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell, args))
    return [_run_cell(a) for a in args]


def exp1_configs(variants=EXP1_VARIANTS, rates=DEFAULT_RATES, seed=1,
                 base: ScenarioConfig | None = None) -> list[ScenarioConfig]:
    base = base or ScenarioConfig()
    return [base.replace(experiment=1, variant=v, pair=None, cbr_mbps=float(r), seed=seed)
            for v in variants for r in rates]


def exp2_configs(pairs=EXP2_PAIRS, rates=DEFAULT_RATES, seed=1,
                 base: ScenarioConfig | None = None) -> list[ScenarioConfig]:
    base = base or ScenarioConfig()
    return [base.replace(experiment=2, pair=tuple(p), cbr_mbps=float(r), seed=seed)
            for p in pairs for r in rates]


def _write_sweep(cells: list[CellResult], out_dir, base_meta: dict):
    out_dir = Path(out_dir)
    rows = [r for c in cells for r in c.rows]
    write_csv(out_dir / "metrics.csv", rows)
    write_plot_data(rows, out_dir)
    meta = dict(base_meta)
    meta["cells"] = len(cells)
    meta["failed_cells"] = ";".join(c.config.scenario_id for c in cells if c.error)
    write_metadata(out_dir / "meta", meta)
    failures = [c for c in cells if c.error]
    if failures:
        with open(out_dir / "failures.txt", "w") as fh:
            for c in failures:
                fh.write(f"{c.config.scenario_id}: {c.error}\n")
    return rows


def run_exp1_sweep(variants=EXP1_VARIANTS, rates=DEFAULT_RATES, seed=1, out_dir=None,
                   base: ScenarioConfig | None = None, jobs=1, traces=True):
    cells = run_cells(exp1_configs(variants, rates, seed, base), out_dir, jobs, traces)
    if out_dir is not None:
        meta = (base or ScenarioConfig()).metadata()
        meta.update(experiment=1, variants=",".join(variants),
                    cbr_rates=",".join(f"{r:g}" for r in rates), seed=seed)
        _write_sweep(cells, out_dir, meta)
    return cells


def run_exp2(pair, rate, seed=1, base: ScenarioConfig | None = None,
             trace_path=None) -> CellResult:
    cfg = (base or ScenarioConfig()).replace(experiment=2, pair=tuple(pair),
                                             cbr_mbps=float(rate), seed=seed)
    return _run_cell((cfg, trace_path))


def run_exp2_sweep(pairs=EXP2_PAIRS, rates=DEFAULT_RATES, seed=1, out_dir=None,
                   base: ScenarioConfig | None = None, jobs=1, traces=True):
    cells = run_cells(exp2_configs(pairs, rates, seed, base), out_dir, jobs, traces)
    if out_dir is not None:
        meta = (base or ScenarioConfig()).metadata()
        meta.update(experiment=2, pairs=";".join(",".join(p) for p in pairs),
                    cbr_rates=",".join(f"{r:g}" for r in rates), seed=seed)
        _write_sweep(cells, out_dir, meta)
        fair_rows = [(c.config.pair, c.config.cbr_mbps, c.fairness) for c in cells
                     if c.fairness is not None]
        with open(Path(out_dir) / "fairness.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pair", "cbr_mbps", "ratio", "jain_index"])
            for pair, rate, f in fair_rows:
                w.writerow([",".join(pair), f"{rate:g}",
                            "NA" if f.ratio is None else f"{f.ratio:.6f}", f"{f.jain:.6f}"])
    return cells


@dataclass
class Exp3Result:
    config: ScenarioConfig
    times: list[float]
    tcp_throughput: list[float]
    cbr_throughput: list[float]
    tcp_latency: list[float | None]
    run: RunResult = field(repr=False)

    def window_mean(self, series, t0, t1) -> float:
        vals = [v for t, v in zip(self.times, series) if t0 <= t < t1 and v is not None]
        return sum(vals) / len(vals) if vals else math.nan


def run_exp3(variant="reno", queue="droptail", seed=1, base: ScenarioConfig | None = None,
             out_dir=None, trace=True, cbr_mbps=EXP3_CBR_MBPS) -> Exp3Result:
    cfg = (base or ScenarioConfig()).replace(experiment=3, variant=variant, pair=None,
                                             queue=queue, seed=seed, cbr_mbps=cbr_mbps)
    trace_path = None
    if out_dir is not None and trace:
        trace_path = Path(out_dir) / f"{cfg.scenario_id}.tr"
    res = run_scenario(cfg, trace_path)
    an = res.analyzer
    w = cfg.bucket
    tp = an.time_series(TCP_A, THROUGHPUT, w, cfg.duration)
    cp = an.time_series(CBR_FLOW, THROUGHPUT, w, cfg.duration)
    lat = an.time_series(TCP_A, LATENCY, w, cfg.duration)
    out = Exp3Result(cfg, [p.bucket_start for p in tp], [p.value for p in tp],
                     [p.value for p in cp], [p.value for p in lat], res)
    if out_dir is not None:
        stem = f"exp3-{cfg.variant}-{cfg.queue}"
        rows = [(t, a, b, c) for t, a, b, c in
                zip(out.times, out.tcp_throughput, out.cbr_throughput, out.tcp_latency)]
        write_dat(Path(out_dir) / f"{stem}.dat", "time_s",
                  ["tcp_mbps", "cbr_mbps", "tcp_latency_s"], rows,
                  f"{cfg.variant} over {cfg.queue}, CBR {cfg.cbr_mbps:g} Mbps from "
                  f"t={cfg.effective_cbr_start:g}s, bucket {w:g}s")
        write_csv(Path(out_dir) / f"{stem}.csv", res.csv_rows())
        write_metadata(Path(out_dir) / f"{stem}.meta", cfg.metadata())
    return out
