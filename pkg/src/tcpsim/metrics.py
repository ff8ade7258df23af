"""Throughput, drop rate, latency and fairness computed from trace events.

A :class:`TraceAnalyzer` ingests events once (either parsed trace records
or live from the simulator through :class:`AnalyzerSink`) and answers
interval queries per flow.  Only data packets (``tcp``/``cbr``) count;
ACKs are ignored.  Intervals are half-open, ``[t0, t1)``.
"""
from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .engine import NS_PER_S
from .errors import InputError
from .tracing import TraceRecord

THROUGHPUT = "throughput"
LATENCY = "latency"


class DropRate(NamedTuple):
    fraction: float
    count: int


class Fairness(NamedTuple):
    ratio: float | None
    jain: float


class TimeSeriesPoint(NamedTuple):
    bucket_start: float
    value: float | None


@dataclass
class FlowStats:
    flow_id: int
    sent_packets: int
    received_packets: int
    dropped_packets: int
    throughput: float          # Mbps
    avg_latency: float | None  # seconds; None when nothing was delivered
    drop_rate: float
    measurement_interval: tuple[float, float]


class _Flow:
    __slots__ = ("src_node", "dst_node", "send_times", "recv_times", "recv_sizes",
                 "recv_latency", "drop_times")

    def __init__(self, src_node, dst_node):
        self.src_node = src_node
        self.dst_node = dst_node
        self.send_times: list[float] = []
        self.recv_times: list[float] = []
        self.recv_sizes: list[int] = []
        self.recv_latency: list[float | None] = []
        self.drop_times: list[float] = []


def _check_interval(interval):
    t0, t1 = interval
    if not t1 > t0:
        raise InputError(f"empty measurement interval {interval}")
    return t0, t1


class TraceAnalyzer:
    def __init__(self):
        self.flows: dict[int, _Flow] = {}
        self._enqueued: dict[int, float] = {}
        self.end_time = 0.0

    # -- ingestion
    def observe(self, event, t, from_node, to_node, kind, size, fid,
                src_node, dst_node, pkt_id):
        if t > self.end_time:
            self.end_time = t
        if kind == "ack":
            return
        flow = self.flows.get(fid)
        if flow is None:
            flow = self.flows[fid] = _Flow(src_node, dst_node)
        if event == "+":
            if from_node == src_node and pkt_id not in self._enqueued:
                self._enqueued[pkt_id] = t
                flow.send_times.append(t)
        elif event == "r":
            if to_node == dst_node:
                start = self._enqueued.pop(pkt_id, None)
                flow.recv_times.append(t)
                flow.recv_sizes.append(size)
                flow.recv_latency.append(None if start is None else t - start)
        elif event == "d":
            flow.drop_times.append(t)
            self._enqueued.pop(pkt_id, None)

    def add(self, rec: TraceRecord):
        self.observe(rec.event, rec.time, rec.from_node, rec.to_node, rec.pkt_type,
                     rec.pkt_size, rec.fid, rec.src_node, rec.dst_node, rec.pkt_id)

    def extend(self, records: Iterable[TraceRecord]) -> "TraceAnalyzer":
        for rec in records:
            self.add(rec)
        return self

    # -- queries
    def flow_ids(self) -> list[int]:
        return sorted(self.flows)

    def _flow(self, fid):
        return self.flows.get(fid)

    @staticmethod
    def _span(times, t0, t1):
        return bisect_left(times, t0), bisect_left(times, t1)

    def throughput(self, fid, interval) -> float:
        t0, t1 = _check_interval(interval)
        flow = self._flow(fid)
        if flow is None:
            return 0.0
        i, j = self._span(flow.recv_times, t0, t1)
        return sum(flow.recv_sizes[i:j]) * 8 / (t1 - t0) / 1e6

    def drop_rate(self, fid, interval) -> DropRate:
        t0, t1 = _check_interval(interval)
        flow = self._flow(fid)
        if flow is None:
            return DropRate(0.0, 0)
        i, j = self._span(flow.drop_times, t0, t1)
        count = j - i
        a, b = self._span(flow.send_times, t0, t1)
        sent = b - a
        return DropRate(min(count / sent, 1.0) if sent else 0.0, count)

    def avg_latency(self, fid, interval) -> float | None:
        t0, t1 = _check_interval(interval)
        flow = self._flow(fid)
        if flow is None:
            return None
        i, j = self._span(flow.recv_times, t0, t1)
        lat = [x for x in flow.recv_latency[i:j] if x is not None]
        return sum(lat) / len(lat) if lat else None

    def counts(self, fid, interval) -> tuple[int, int, int]:
        t0, t1 = _check_interval(interval)
        flow = self._flow(fid)
        if flow is None:
            return 0, 0, 0
        spans = [self._span(x, t0, t1) for x in
                 (flow.send_times, flow.recv_times, flow.drop_times)]
        return tuple(j - i for i, j in spans)

    def flow_stats(self, fid, interval) -> FlowStats:
        sent, received, dropped = self.counts(fid, interval)
        return FlowStats(fid, sent, received, dropped,
                         self.throughput(fid, interval),
                         self.avg_latency(fid, interval),
                         self.drop_rate(fid, interval).fraction,
                         tuple(interval))

    def time_series(self, fid, metric=THROUGHPUT, bucket_width=0.5, end=None):
        if not bucket_width > 0:
            raise InputError(f"bucket width must be positive, got {bucket_width}")
        end = self.end_time if end is None else end
        n = max(math.ceil(end / bucket_width - 1e-9), 1)
        points = []
        for k in range(n):
            lo, hi = k * bucket_width, (k + 1) * bucket_width
            if metric == THROUGHPUT:
                value = self.throughput(fid, (lo, hi))
            elif metric == LATENCY:
                value = self.avg_latency(fid, (lo, hi))
            else:
                raise InputError(f"unknown metric {metric!r}")
            points.append(TimeSeriesPoint(lo, value))
        return points


class AnalyzerSink:
    """Feeds simulator trace events straight into an analyzer."""

    def __init__(self, analyzer: TraceAnalyzer | None = None):
        self.analyzer = analyzer or TraceAnalyzer()

    def on_event(self, event, time_ns, from_node, to_node, pkt):
        self.analyzer.observe(event, time_ns / NS_PER_S, from_node, to_node, pkt.kind,
                              pkt.size, pkt.flow_id, pkt.src_node, pkt.dst_node, pkt.uid)


# ----------------------------------------------------- function-style API

def _analyze(records):
    if isinstance(records, TraceAnalyzer):
        return records
    return TraceAnalyzer().extend(records)


def throughput(records, flow_id, interval) -> float:
    """Delivered payload of ``flow_id`` in Mbps over ``interval``."""
    return _analyze(records).throughput(flow_id, interval)


def drop_rate(records, flow_id, interval) -> DropRate:
    return _analyze(records).drop_rate(flow_id, interval)


def avg_latency(records, flow_id, interval) -> float | None:
    return _analyze(records).avg_latency(flow_id, interval)


def time_series(records, flow_id, metric=THROUGHPUT, bucket_width=0.5, end=None):
    return _analyze(records).time_series(flow_id, metric, bucket_width, end)


def jain_index(values) -> float:
    values = list(values)
    top = max(values, default=0)
    if top <= 0:
        raise InputError("Jain index undefined when every throughput is zero")
    # scale by the largest value so tiny inputs do not underflow when squared
    scaled = [v / top for v in values]
    total = sum(scaled)
    return total * total / (len(scaled) * sum(v * v for v in scaled))


def fairness(a: float, b: float) -> Fairness:
    if a < 0 or b < 0:
        raise InputError("throughputs must be non-negative")
    if a == 0 and b == 0:
        raise InputError("fairness undefined when both flows are idle")
    return Fairness(a / b if b else None, jain_index((a, b)))
