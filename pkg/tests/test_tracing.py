import io

import pytest
from hypothesis import given, settings, strategies as st

from tcpsim.engine import NS_PER_S
from tcpsim.errors import TraceParseError
from tcpsim.tracing import (NO_FLAGS, TraceRecord, emit_line, format_time_ns, parse_line,
                            parse_text, read_trace)

# the eight-line sample trace, with its five-dash flags
SAMPLE = """\
r 1.3556 3 2 ack 40 ----- 1 3.0 0.0 15 201
+ 1.3556 2 0 ack 40 ----- 1 3.0 0.0 15 201
- 1.3556 2 0 ack 40 ----- 1 3.0 0.0 15 201
r 1.35576 0 2 tcp 1000 ----- 1 0.0 3.0 29 199
+ 1.35576 2 3 tcp 1000 ----- 1 0.0 3.0 29 199
d 1.35576 2 3 tcp 1000 ----- 1 0.0 3.0 29 199
+ 1.356 1 2 cbr 1000 ----- 2 1.0 3.1 157 207
- 1.356 1 2 cbr 1000 ----- 2 1.0 3.1 157 207
"""


def test_emit_cbr_enqueue():
    rec = TraceRecord("+", 1.356, 1, 2, "cbr", 1000, NO_FLAGS, 2, "1.0", "3.1", 157, 207)
    assert emit_line(rec) == "+ 1.356 1 2 cbr 1000 ------- 2 1.0 3.1 157 207\n"


def test_emit_drop():
    rec = TraceRecord("d", 1.35576, 2, 3, "tcp", 1000, "", 1, "0.0", "3.0", 29, 199)
    assert emit_line(rec) == "d 1.35576 2 3 tcp 1000 ------- 1 0.0 3.0 29 199\n"


def test_parse_first_sample_line():
    rec = parse_line("r 1.3556 3 2 ack 40 ----- 1 3.0 0.0 15 201")
    assert rec == TraceRecord("r", 1.3556, 3, 2, "ack", 40, "-----", 1, "3.0", "0.0", 15, 201)
    assert (rec.src_node, rec.dst_node) == (3, 0)


def test_sample_trace_has_one_drop():
    recs = parse_text(SAMPLE)
    assert len(recs) == 8
    assert [r.event for r in recs].count("d") == 1


@pytest.mark.parametrize("line, field", [
    ("x 1.0 0 1 tcp 1000 ------- 1 0.0 3.0 1 1", "event"),
    ("r 1.0 0 1 tcp", "field count"),
    ("r abc 0 1 tcp 1000 ------- 1 0.0 3.0 1 1", "time"),
    ("r 1.0 0 1 tcp big ------- 1 0.0 3.0 1 1", "pkt_size"),
    ("r 1.0 0 1 tcp 1000 ---+--- 1 0.0 3.0 1 1", "flags"),
    ("r 1.0 0 1 tcp 1000 ------- 1 x.0 3.0 1 1", "src_addr"),
])
def test_parse_errors_name_the_field(line, field):
    with pytest.raises(TraceParseError) as info:
        parse_line(line, 4)
    assert info.value.field == field
    assert info.value.line_no == 4


def test_read_trace_empty_and_blank_lines():
    assert list(read_trace(io.StringIO(""))) == []
    assert len(list(read_trace(io.StringIO("\n" + SAMPLE + "\n\n")))) == 8


def test_read_trace_reports_bad_line_number():
    lines = SAMPLE.splitlines(keepends=True)
    lines[2] = "- 1.3556 2 0 ack\n"
    with pytest.raises(TraceParseError) as info:
        list(read_trace(lines))
    assert info.value.line_no == 3
    assert "line 3" in str(info.value)


def test_time_rendering():
    assert format_time_ns(0) == "0"
    assert format_time_ns(2 * NS_PER_S) == "2"
    assert format_time_ns(1_356_000_000) == "1.356"
    assert format_time_ns(1) == "0.000000001"


records = st.builds(
    TraceRecord,
    event=st.sampled_from("+-rd"),
    time=st.integers(min_value=0, max_value=10**6 * NS_PER_S).map(lambda ns: ns / NS_PER_S),
    from_node=st.integers(0, 99),
    to_node=st.integers(0, 99),
    pkt_type=st.sampled_from(["tcp", "ack", "cbr"]),
    pkt_size=st.integers(1, 65535),
    flags=st.just(NO_FLAGS),
    fid=st.integers(0, 10**6),
    src_addr=st.builds("{}.{}".format, st.integers(0, 99), st.integers(0, 9)),
    dst_addr=st.builds("{}.{}".format, st.integers(0, 99), st.integers(0, 9)),
    seq_num=st.integers(0, 10**9),
    pkt_id=st.integers(0, 10**9),
)


@settings(max_examples=10_000, deadline=None)
@given(records)
def test_round_trip(rec):
    line = emit_line(rec)
    assert line.endswith("\n") and line.count(" ") == 11
    assert parse_line(line) == rec
