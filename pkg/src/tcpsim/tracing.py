"""NS-2 style trace lines: twelve whitespace separated columns.

    event time from to type size flags fid src dst seq pkt_id

Times are kept internally as integer nanoseconds; a line carries the
shortest decimal that maps back to the same nanosecond count.
"""
from __future__ import annotations

import io
from typing import IO, Iterable, Iterator, NamedTuple

from .engine import NS_PER_S
from .errors import TraceParseError

EVENTS = ("+", "-", "r", "d")
NO_FLAGS = "-------"
FIELDS = ("event", "time", "from_node", "to_node", "pkt_type", "pkt_size",
          "flags", "fid", "src_addr", "dst_addr", "seq_num", "pkt_id")


class TraceRecord(NamedTuple):
    event: str
    time: float
    from_node: int
    to_node: int
    pkt_type: str
    pkt_size: int
    flags: str
    fid: int
    src_addr: str
    dst_addr: str
    seq_num: int
    pkt_id: int

    @property
    def src_node(self) -> int:
        return int(self.src_addr.partition(".")[0])

    @property
    def dst_node(self) -> int:
        return int(self.dst_addr.partition(".")[0])


def format_time_ns(ns: int) -> str:
    whole, frac = divmod(ns, NS_PER_S)
    if frac == 0:
        return str(whole)
    return f"{whole}.{frac:09d}".rstrip("0")


def emit_line(rec: TraceRecord) -> str:
    return " ".join((
        rec.event, format_time_ns(round(rec.time * NS_PER_S)),
        str(rec.from_node), str(rec.to_node), rec.pkt_type, str(rec.pkt_size),
        rec.flags or NO_FLAGS, str(rec.fid), rec.src_addr, rec.dst_addr,
        str(rec.seq_num), str(rec.pkt_id),
    )) + "\n"


def _int(value, name, line_no):
    try:
        return int(value)
    except ValueError:
        raise TraceParseError(f"field {name!r} is not an integer: {value!r}",
                              line_no, name) from None


def _addr(value, name, line_no):
    node, dot, port = value.partition(".")
    if not (node.isdigit() and (not dot or port.isdigit())):
        raise TraceParseError(f"field {name!r} is not a node.port address: {value!r}",
                              line_no, name)
    return value


def parse_line(line: str, line_no: int | None = None) -> TraceRecord:
    parts = line.split()
    if len(parts) != len(FIELDS):
        raise TraceParseError(f"expected {len(FIELDS)} fields, got {len(parts)}",
                              line_no, "field count")
    event = parts[0]
    if event not in EVENTS:
        raise TraceParseError(f"unknown event {event!r}", line_no, "event")
    try:
        time = float(parts[1])
    except ValueError:
        raise TraceParseError(f"field 'time' is not a number: {parts[1]!r}",
                              line_no, "time") from None
    if not time >= 0:
        raise TraceParseError(f"negative or NaN time {parts[1]!r}", line_no, "time")
    flags = parts[6]
    if not all(c == "-" or c.isalpha() for c in flags):
        raise TraceParseError(f"bad flags field {flags!r}", line_no, "flags")
    size = _int(parts[5], "pkt_size", line_no)
    if size <= 0:
        raise TraceParseError(f"non-positive packet size {size}", line_no, "pkt_size")
    return TraceRecord(
        event, time,
        _int(parts[2], "from_node", line_no), _int(parts[3], "to_node", line_no),
        parts[4], size, flags, _int(parts[7], "fid", line_no),
        _addr(parts[8], "src_addr", line_no), _addr(parts[9], "dst_addr", line_no),
        _int(parts[10], "seq_num", line_no), _int(parts[11], "pkt_id", line_no),
    )


def read_trace(stream: IO[str] | Iterable[str]) -> Iterator[TraceRecord]:
    """Yield records lazily; blank lines are skipped, the first bad line raises."""
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        yield parse_line(line, line_no)


def read_trace_file(path) -> Iterator[TraceRecord]:
    with open(path, encoding="ascii") as fh:
        yield from read_trace(fh)


def parse_text(text: str) -> list[TraceRecord]:
    return list(read_trace(io.StringIO(text)))


class TraceWriter:
    """Trace sink that writes lines to a text stream as events happen."""

    def __init__(self, stream: IO[str]):
        self.stream = stream
        self.lines = 0

    def on_event(self, event, time_ns, from_node, to_node, pkt):
        self.stream.write(
            f"{event} {format_time_ns(time_ns)} {from_node} {to_node} "
            f"{pkt.kind} {pkt.size} {NO_FLAGS} {pkt.flow_id} "
            f"{pkt.src_node}.{pkt.src_port} {pkt.dst_node}.{pkt.dst_port} "
            f"{pkt.seq_num} {pkt.uid}\n")
        self.lines += 1


class RecordCollector:
    """Trace sink that keeps TraceRecord objects in memory."""

    def __init__(self):
        self.records: list[TraceRecord] = []

    def on_event(self, event, time_ns, from_node, to_node, pkt):
        self.records.append(record_for(event, time_ns, from_node, to_node, pkt))


def record_for(event, time_ns, from_node, to_node, pkt) -> TraceRecord:
    return TraceRecord(event, time_ns / NS_PER_S, from_node, to_node, pkt.kind,
                       pkt.size, NO_FLAGS, pkt.flow_id,
                       f"{pkt.src_node}.{pkt.src_port}",
                       f"{pkt.dst_node}.{pkt.dst_port}", pkt.seq_num, pkt.uid)
