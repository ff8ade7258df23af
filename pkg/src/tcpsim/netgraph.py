"""Topology, store-and-forward links, and the DropTail / RED queues.

Nodes are numbered 0..5 for N1..N6.  Every link owns an egress queue;
the packet currently being serialized is not counted as queued.
"""
from __future__ import annotations

import enum
import random
from collections import deque
from dataclasses import dataclass, field

from .engine import NS_PER_S, Simulator, to_ns
from .errors import ConfigurationError, InputError, InvariantViolation

N1, N2, N3, N4, N5, N6 = range(6)
NODE_NAMES = ("N1", "N2", "N3", "N4", "N5", "N6")

DUMBBELL_EDGES = ((N1, N2), (N5, N2), (N2, N3), (N3, N4), (N3, N6))
BOTTLENECK = (N2, N3)


def _name(node: int) -> str:
    return NODE_NAMES[node] if 0 <= node < len(NODE_NAMES) else f"node {node}"


class Packet:
    __slots__ = ("uid", "flow_id", "kind", "size", "src_node", "src_port",
                 "dst_node", "dst_port", "seq_num", "created_at", "sack_blocks")

    def __init__(self, uid, flow_id, kind, size, src_node, src_port,
                 dst_node, dst_port, seq_num, created_at=0, sack_blocks=()):
        self.uid = uid
        self.flow_id = flow_id
        self.kind = kind
        self.size = size
        self.src_node = src_node
        self.src_port = src_port
        self.dst_node = dst_node
        self.dst_port = dst_port
        self.seq_num = seq_num
        self.created_at = created_at  # ns, set on first enqueue at the source
        self.sack_blocks = sack_blocks

    def __repr__(self):
        return (f"Packet(uid={self.uid}, fid={self.flow_id}, {self.kind} "
                f"seq={self.seq_num}, {self.src_node}->{self.dst_node})")


# ---------------------------------------------------------------- queues

@dataclass
class DropTail:
    limit: int = 50

    kind = "droptail"

    def __post_init__(self):
        if self.limit < 1:
            raise InputError(f"queue limit must be positive, got {self.limit}")

    def params(self) -> dict:
        return {"limit": self.limit}


@dataclass
class Red:
    """RED parameters. Defaults are the classic Floyd/Jacobson values."""

    limit: int = 50
    min_th: float = 5.0
    max_th: float = 15.0
    max_p: float = 0.02
    w_q: float = 0.002

    kind = "red"

    def __post_init__(self):
        if not 0 < self.min_th < self.max_th <= self.limit:
            raise InputError("RED needs 0 < min_th < max_th <= limit")
        if not 0 < self.max_p <= 1:
            raise InputError(f"max_p out of (0, 1]: {self.max_p}")
        if not 0 < self.w_q <= 1:
            raise InputError(f"w_q out of (0, 1]: {self.w_q}")

    def params(self) -> dict:
        return {"limit": self.limit, "min_th": self.min_th, "max_th": self.max_th,
                "max_p": self.max_p, "w_q": self.w_q}


class Admit(enum.Enum):
    ADMIT = "admit"
    EARLY_DROP = "early-drop"
    FORCED_DROP = "forced-drop"


class QueueState:
    """Runtime state of one egress queue (FIFO of waiting packets)."""

    def __init__(self, config):
        self.config = config
        self.limit = config.limit
        self.packets: deque[Packet] = deque()
        # RED runtime
        self.avg = 0.0
        self.count = 0
        self.idle_since: int | None = 0
        self.early_drops = 0
        self.forced_drops = 0

    @property
    def occupancy(self) -> int:
        return len(self.packets)

    @property
    def is_red(self) -> bool:
        return self.config.kind == "red"


def red_update_avg(q: QueueState, now_ns: int, typical_tx_ns: int) -> float:
    """Refresh the EWMA queue estimate on a packet arrival."""
    w_q = q.config.w_q
    if q.idle_since is not None and q.occupancy == 0:
        m = (now_ns - q.idle_since) / typical_tx_ns if typical_tx_ns > 0 else 0.0
        q.avg *= (1.0 - w_q) ** m
        q.idle_since = None
    else:
        q.avg = (1.0 - w_q) * q.avg + w_q * q.occupancy
    return q.avg


def red_drop_probability(cfg: Red, avg: float, count: int) -> float:
    """Early-drop probability inside the [min_th, max_th) band."""
    p_b = cfg.max_p * (avg - cfg.min_th) / (cfg.max_th - cfg.min_th)
    denom = 1.0 - count * p_b
    if denom <= 0:
        return 1.0
    return min(max(p_b / denom, p_b), 1.0)


def red_admit(q: QueueState, rng_draw: float) -> Admit:
    cfg = q.config
    if q.avg < cfg.min_th:
        q.count = 0
        if q.occupancy >= q.limit:
            return Admit.FORCED_DROP
        return Admit.ADMIT
    if q.avg >= cfg.max_th or q.occupancy >= q.limit:
        q.count = 0
        return Admit.FORCED_DROP
    p_a = red_drop_probability(cfg, q.avg, q.count)
    if rng_draw < p_a:
        q.count = 0
        return Admit.EARLY_DROP
    q.count += 1
    return Admit.ADMIT


# ----------------------------------------------------------------- links

class Link:
    """A directed, non-preemptive, store-and-forward link."""

    def __init__(self, src: int, dst: int, bandwidth: float, prop_delay: float, queue):
        if bandwidth <= 0:
            raise InputError(f"bandwidth must be positive, got {bandwidth}")
        if prop_delay < 0:
            raise InputError(f"negative propagation delay {prop_delay}")
        self.src = src
        self.dst = dst
        self.bandwidth = bandwidth
        self.prop_delay = prop_delay
        self.prop_ns = to_ns(prop_delay)
        self.queue = QueueState(queue)
        self.busy_until = 0  # ns
        self.transmitting: Packet | None = None
        self.on_wire: dict[int, Packet] = {}
        self.offered = 0
        self.delivered = 0
        self.dropped = 0

    def serialization_ns(self, size: int) -> int:
        return round(size * 8 * NS_PER_S / self.bandwidth)

    def transmit(self, packet: Packet, now_ns: int) -> int:
        """Start sending ``packet``; return the ns time it reaches the far end."""
        start = max(now_ns, self.busy_until)
        self.busy_until = start + self.serialization_ns(packet.size)
        return self.busy_until + self.prop_ns

    @property
    def in_flight(self) -> int:
        return self.offered - self.delivered - self.dropped

    def __repr__(self):
        return f"Link({NODE_NAMES[self.src]}->{NODE_NAMES[self.dst]})"


def link_transmit(link: Link, packet: Packet, now: float) -> float:
    return link.transmit(packet, to_ns(now)) / NS_PER_S


# --------------------------------------------------------------- topology

@dataclass
class Topology:
    nodes: list[int]
    links: dict[tuple[int, int], Link]
    next_hop: dict[tuple[int, int], int] = field(default_factory=dict)

    def route(self, src: int, dst: int) -> list[int]:
        path = [src]
        node = src
        while node != dst:
            try:
                node = self.next_hop[node, dst]
            except KeyError:
                raise ConfigurationError(
                    f"no route {_name(src)} -> {_name(dst)}") from None
            path.append(node)
            if len(path) > len(self.nodes):
                raise ConfigurationError("routing loop")
        return path

    def path_links(self, src: int, dst: int) -> list[Link]:
        path = self.route(src, dst)
        return [self.links[a, b] for a, b in zip(path, path[1:])]

    def latency_floor(self, src: int, dst: int, size: int) -> float:
        """Propagation plus serialization along the path, no queueing."""
        return sum(l.prop_delay + l.serialization_ns(size) / NS_PER_S
                   for l in self.path_links(src, dst))


def _shortest_next_hops(nodes, adjacency):
    table = {}
    for dst in nodes:
        # BFS outward from dst; neighbours are visited in sorted order so ties are stable
        dist = {dst: 0}
        frontier = [dst]
        while frontier:
            nxt = []
            for n in frontier:
                for m in sorted(adjacency[n]):
                    if m not in dist:
                        dist[m] = dist[n] + 1
                        table[m, dst] = n
                        nxt.append(m)
            frontier = nxt
    return table


def build_topology(edges, bandwidth, prop_delay, queue_for) -> Topology:
    nodes = sorted({n for e in edges for n in e})
    links = {}
    adjacency = {n: set() for n in nodes}
    for a, b in edges:
        for u, v in ((a, b), (b, a)):
            links[u, v] = Link(u, v, bandwidth, prop_delay, queue_for(u, v))
            adjacency[u].add(v)
    return Topology(nodes, links, _shortest_next_hops(nodes, adjacency))


def build_dumbbell(link_bandwidth=10e6, prop_delay=0.010,
                   bottleneck_queue=None, edge_queue=None) -> Topology:
    """Six nodes, N2-N3 bottleneck; N1, N5 hang off N2 and N4, N6 off N3."""
    bottleneck_queue = bottleneck_queue or DropTail(50)
    edge_queue = edge_queue or DropTail(50)

    def queue_for(u, v):
        return bottleneck_queue if {u, v} == set(BOTTLENECK) else edge_queue

    return build_topology(DUMBBELL_EDGES, link_bandwidth, prop_delay, queue_for)


# ---------------------------------------------------------------- network

class Forward(enum.Enum):
    DELIVERED = "delivered-to-agent"
    ENQUEUED = "enqueued-on-link"
    DROPPED = "dropped"


class FlowMonitor:
    """Live per-flow counters kept independently of the trace."""

    __slots__ = ("sent", "received", "received_bytes", "dropped", "latency_sum",
                 "source_drops")

    def __init__(self):
        self.sent = 0           # data packets admitted at the source link
        self.source_drops = 0   # data packets refused at the source link
        self.received = 0
        self.received_bytes = 0
        self.dropped = 0
        self.latency_sum = 0    # ns


class Network:
    """Binds a topology to a simulator: forwarding, queues, tracing."""

    def __init__(self, sim: Simulator, topology: Topology, rng: random.Random | None = None,
                 typical_tx_ns: int | None = None, check_invariants: bool = True):
        self.sim = sim
        self.topology = topology
        self.rng = rng or random.Random(0)
        self.sinks = []
        self.agents = {}
        self.flows: dict[int, FlowMonitor] = {}
        self._uid = 0
        self.check_invariants = check_invariants
        self.drop_filter = None  # optional callable(link, packet) -> bool
        if typical_tx_ns is None:
            bl = topology.links.get(BOTTLENECK) or next(iter(topology.links.values()))
            typical_tx_ns = bl.serialization_ns(1000)
        self.typical_tx_ns = typical_tx_ns

    # -- plumbing
    def next_uid(self) -> int:
        uid = self._uid
        self._uid += 1
        return uid

    def attach(self, node: int, port: int, agent):
        if (node, port) in self.agents:
            raise ConfigurationError(f"port {node}.{port} already bound")
        self.agents[node, port] = agent

    def add_sink(self, sink):
        self.sinks.append(sink)

    def flow(self, flow_id: int) -> FlowMonitor:
        mon = self.flows.get(flow_id)
        if mon is None:
            mon = self.flows[flow_id] = FlowMonitor()
        return mon

    def _trace(self, event, from_node, to_node, pkt):
        now = self.sim.now_ns
        for sink in self.sinks:
            sink.on_event(event, now, from_node, to_node, pkt)

    # -- forwarding
    def send(self, pkt: Packet) -> Forward:
        """Inject a packet from the agent at its source node."""
        pkt.created_at = self.sim.now_ns
        outcome = self.forward(pkt, pkt.src_node)
        if pkt.kind != "ack":
            mon = self.flow(pkt.flow_id)
            if outcome is Forward.DROPPED:
                mon.source_drops += 1
            else:
                mon.sent += 1
        return outcome

    def forward(self, pkt: Packet, at_node: int) -> Forward:
        if at_node == pkt.dst_node:
            agent = self.agents.get((pkt.dst_node, pkt.dst_port))
            if pkt.kind != "ack":
                mon = self.flow(pkt.flow_id)
                mon.received += 1
                mon.received_bytes += pkt.size
                mon.latency_sum += self.sim.now_ns - pkt.created_at
            if agent is not None:
                agent.receive(pkt)
            return Forward.DELIVERED
        try:
            hop = self.topology.next_hop[at_node, pkt.dst_node]
        except KeyError:
            raise ConfigurationError(
                f"no route from {at_node} to {pkt.dst_node}") from None
        return self.enqueue(self.topology.links[at_node, hop], pkt)

    def enqueue(self, link: Link, pkt: Packet) -> Forward:
        q = link.queue
        link.offered += 1
        if q.is_red:
            red_update_avg(q, self.sim.now_ns, self.typical_tx_ns)
            verdict = red_admit(q, self.rng.random())
            if verdict is Admit.EARLY_DROP:
                q.early_drops += 1
            elif verdict is Admit.FORCED_DROP:
                q.forced_drops += 1
            admitted = verdict is Admit.ADMIT
        else:
            admitted = q.occupancy < q.limit
        if admitted and self.drop_filter is not None and self.drop_filter(link, pkt):
            admitted = False
        if not admitted:
            link.dropped += 1
            if pkt.kind != "ack":
                self.flow(pkt.flow_id).dropped += 1
            self._trace("d", link.src, link.dst, pkt)
            return Forward.DROPPED
        q.packets.append(pkt)
        self._trace("+", link.src, link.dst, pkt)
        if self.check_invariants and q.occupancy > q.limit:
            raise InvariantViolation(f"{link} queue above limit")
        if link.transmitting is None:
            self._start_next(link)
        return Forward.ENQUEUED

    def _start_next(self, link: Link):
        q = link.queue
        pkt = q.packets.popleft()
        link.transmitting = pkt
        link.on_wire[pkt.uid] = pkt
        self._trace("-", link.src, link.dst, pkt)
        now = self.sim.now_ns
        arrive = link.transmit(pkt, now)
        self.sim.schedule_ns(link.busy_until - now, self._tx_done, link)
        self.sim.schedule_ns(arrive - now, self._arrive, link, pkt)

    def _tx_done(self, link: Link):
        link.transmitting = None
        if link.queue.packets:
            self._start_next(link)
        else:
            link.queue.idle_since = self.sim.now_ns

    def _arrive(self, link: Link, pkt: Packet):
        link.delivered += 1
        del link.on_wire[pkt.uid]
        self._trace("r", link.src, link.dst, pkt)
        self.forward(pkt, link.dst)

    def count_in_network(self, flow_id: int) -> int:
        """Data packets of a flow sitting in a queue or on a wire right now."""
        n = 0
        for link in self.topology.links.values():
            n += sum(1 for p in link.queue.packets if p.flow_id == flow_id and p.kind != "ack")
            n += sum(1 for p in link.on_wire.values() if p.flow_id == flow_id and p.kind != "ack")
        return n
