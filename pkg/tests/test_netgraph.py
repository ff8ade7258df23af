import random

import pytest

from tcpsim.engine import Simulator, to_ns
from tcpsim.errors import ConfigurationError, InputError
from tcpsim.netgraph import (N1, N2, N3, N4, N5, N6, Admit, DropTail, Forward, Link,
                             Network, Packet, QueueState, Red, build_dumbbell,
                             link_transmit, red_admit, red_drop_probability, red_update_avg)
from tcpsim.tracing import RecordCollector


def pkt(size=1000, uid=0, src=N1, dst=N4, kind="tcp", fid=1):
    return Packet(uid, fid, kind, size, src, 0, dst, 0, uid)


def test_dumbbell_shape_and_routes():
    topo = build_dumbbell(10e6, 0.010, DropTail(50), DropTail(50))
    assert len(topo.nodes) == 6
    assert len(topo.links) == 10
    assert topo.route(N1, N4) == [N1, N2, N3, N4]
    assert topo.route(N5, N6) == [N5, N2, N3, N6]
    assert topo.route(N2, N3) == [N2, N3]
    assert topo.route(N4, N1) == [N4, N3, N2, N1]


def test_bottleneck_queue_installed_both_ways():
    topo = build_dumbbell(bottleneck_queue=Red(), edge_queue=DropTail(7))
    assert topo.links[N2, N3].queue.is_red and topo.links[N3, N2].queue.is_red
    assert topo.links[N1, N2].queue.limit == 7


def test_link_transmit_data_and_ack():
    link = Link(N1, N2, 10e6, 0.010, DropTail())
    assert link_transmit(link, pkt(1000), 0.0) == pytest.approx(0.0108)
    link = Link(N1, N2, 10e6, 0.010, DropTail())
    assert link_transmit(link, pkt(40), 0.0) == pytest.approx(0.010032)


def test_second_packet_waits_for_first():
    link = Link(N1, N2, 10e6, 0.010, DropTail())
    first = link.transmit(pkt(1000, 0), 0)
    second = link.transmit(pkt(1000, 1), 0)
    assert second - first == to_ns(0.0008)


def test_red_avg_single_update():
    q = QueueState(Red())
    q.idle_since = None
    for i in range(10):
        q.packets.append(pkt(uid=i))
    assert red_update_avg(q, 0, 800_000) == pytest.approx(0.02)


def test_red_avg_degenerate_weight():
    q = QueueState(Red(w_q=1.0))
    q.idle_since = None
    q.packets.extend(pkt(uid=i) for i in range(7))
    assert red_update_avg(q, 0, 800_000) == 7


def test_red_avg_decays_while_idle():
    q = QueueState(Red())
    q.avg = 10.0
    q.idle_since = 0
    assert red_update_avg(q, to_ns(5.0), 800_000) < 10.0 * 0.01


@pytest.mark.parametrize("avg, expected", [(3, Admit.ADMIT), (16, Admit.FORCED_DROP)])
def test_red_bands(avg, expected):
    q = QueueState(Red())
    q.avg = avg
    assert red_admit(q, 0.0) is expected


def test_red_probability_at_midpoint():
    assert red_drop_probability(Red(), 10.0, 0) == pytest.approx(0.01)
    # count raises the effective probability
    assert red_drop_probability(Red(), 10.0, 50) == pytest.approx(0.01 / 0.5)


def test_red_full_queue_forces_drop():
    q = QueueState(Red(limit=15))
    q.avg = 2.0
    q.packets.extend(pkt(uid=i) for i in range(15))
    assert red_admit(q, 0.99) is Admit.FORCED_DROP


def test_queue_config_validation():
    with pytest.raises(InputError):
        Red(min_th=20, max_th=15)
    with pytest.raises(InputError):
        Red(max_p=0)
    with pytest.raises(InputError):
        DropTail(0)


def _network(queue=None):
    sim = Simulator()
    topo = build_dumbbell(10e6, 0.010, queue or DropTail(50), DropTail(50))
    net = Network(sim, topo, random.Random(1))
    col = RecordCollector()
    net.add_sink(col)
    return sim, net, col


class Catcher:
    def __init__(self):
        self.got = []

    def receive(self, p):
        self.got.append(p)


def test_forward_outcomes_and_trace_events():
    sim, net, col = _network(DropTail(1))
    sink = Catcher()
    net.attach(N4, 0, sink)
    assert net.send(pkt(uid=0)) is Forward.ENQUEUED
    sim.run_until(1)
    assert [p.uid for p in sink.got] == [0]
    assert net.forward(pkt(uid=1), N4) is Forward.DELIVERED
    events = [(r.event, r.from_node, r.to_node) for r in col.records]
    assert events[:3] == [("+", 0, 1), ("-", 0, 1), ("r", 0, 1)]
    assert events[-1] == ("r", 2, 3)


def test_full_droptail_drops_and_traces():
    sim, net, col = _network(DropTail(1))
    link = net.topology.links[N2, N3]
    link.queue.packets.append(pkt(uid=99))
    link.transmitting = object()  # busy, so the queue stays full
    assert net.forward(pkt(uid=5), N2) is Forward.DROPPED
    assert col.records[-1].event == "d"
    assert link.offered == link.dropped == 1


def test_single_packet_latency():
    sim, net, _ = _network()
    sink = Catcher()
    net.attach(N3, 0, sink)
    sim.schedule(1.0, net.send, pkt(src=N1, dst=N3))
    sim.run_until(2)
    mon = net.flow(1)
    assert mon.received == 1
    assert mon.latency_sum == to_ns(0.0216)


def test_latency_floor():
    topo = build_dumbbell()
    assert topo.latency_floor(N1, N4, 1000) == pytest.approx(3 * 0.0108)


def test_unrouted_destination_fails_fast():
    topo = build_dumbbell()
    with pytest.raises(ConfigurationError):
        topo.route(N1, 17)
    sim, net, _ = _network()
    with pytest.raises(ConfigurationError):
        net.attach(N1, 0, Catcher()) or net.attach(N1, 0, Catcher())


def test_red_below_min_band_has_no_early_drops():
    sim, net, _ = _network(Red())
    net.attach(N4, 0, Catcher())
    for i in range(200):
        sim.schedule(i * 0.01, net.send, pkt(uid=i))
    sim.run_until(5)
    q = net.topology.links[N2, N3].queue
    assert q.avg < 5 and q.early_drops == 0
