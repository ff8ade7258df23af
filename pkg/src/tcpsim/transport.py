"""Endpoint agents: TCP senders (Tahoe, Reno, NewReno, Vegas, SACK),
the TCP sink, and a constant-bit-rate source with its sink.

Sequence numbers count segments.  cwnd and ssthresh are in segments and
cwnd is real-valued; the usable window is its floor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .engine import NS_PER_S, Simulator, to_ns
from .netgraph import Network, Packet
from .errors import InputError, ProtocolViolation

SLOW_START = "slow-start"
CONGESTION_AVOIDANCE = "congestion-avoidance"
FAST_RECOVERY = "fast-recovery"

DUPTHRESH = 3
DATA_SIZE = 1000
ACK_SIZE = 40


@dataclass
class TcpParams:
    segment_size: int = DATA_SIZE
    ack_size: int = ACK_SIZE
    window: int = 64          # receiver-advertised window, segments
    init_cwnd: float = 1.0
    init_ssthresh: float = 64.0
    rto_init: float = 1.0
    rto_min: float = 0.2
    rto_max: float = 64.0
    vegas_alpha: float = 1.0
    vegas_beta: float = 3.0
    vegas_gamma: float = 1.0


class RttEstimator:
    """Jacobson/Karels smoothed RTT with exponential backoff."""

    def __init__(self, rto_init=1.0, rto_min=0.2, rto_max=64.0):
        self.srtt: float | None = None
        self.rttvar = 0.0
        self.rto_min = rto_min
        self.rto_max = rto_max
        self.base_rto = rto_init
        self.backoff = 1

    @property
    def rto(self) -> float:
        return min(self.base_rto * self.backoff, self.rto_max)

    def update(self, sample: float) -> float:
        if not sample > 0:
            raise InputError(f"RTT sample must be positive, got {sample}")
        if self.srtt is None:
            self.srtt = sample
            self.rttvar = sample / 2
        else:
            self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.srtt - sample)
            self.srtt = 0.875 * self.srtt + 0.125 * sample
        self.base_rto = min(max(self.srtt + 4 * self.rttvar, self.rto_min), self.rto_max)
        self.backoff = 1
        return self.rto

    def back_off(self) -> float:
        if self.base_rto * self.backoff < self.rto_max:
            self.backoff *= 2
        return self.rto


def rtt_update(estimator: RttEstimator, sample: float) -> RttEstimator:
    estimator.update(sample)
    return estimator


# ------------------------------------------------------------------ senders

class TcpSender:
    """Tahoe: slow start, congestion avoidance, fast retransmit, go-back-N.

    ``transmit(seq, is_retransmission)`` hands a segment to the network.
    Subclasses override the loss-recovery hooks.
    """

    variant = "tahoe"

    def __init__(self, sim: Simulator, transmit, params: TcpParams | None = None):
        self.sim = sim
        self._transmit = transmit
        self.params = p = params or TcpParams()
        self.segment_size = p.segment_size
        self.rcv_wnd = p.window
        self.cwnd = float(p.init_cwnd)
        self.ssthresh = float(p.init_ssthresh)
        self.phase = SLOW_START
        self.dupacks = 0
        self.snd_una = 0
        self.snd_nxt = 0
        self.snd_max = 0
        self.recover = 0  # snd_nxt when the current recovery began
        self.rtt = RttEstimator(p.rto_init, p.rto_min, p.rto_max)
        self._sent_at: dict[int, int] = {}
        self._retransmitted: set[int] = set()
        self._timer = None
        self.running = False
        # counters
        self.segments_sent = 0
        self.retransmissions = 0
        self.retransmitted_seqs: list[int] = []
        self.timeouts = 0
        self.ssthresh_reductions = 0
        self.fast_retransmits = 0

    # -- helpers
    @property
    def flight(self) -> int:
        return self.snd_nxt - self.snd_una

    def _send(self, seq: int):
        retx = seq < self.snd_max
        if retx:
            self._retransmitted.add(seq)
            self.retransmissions += 1
            self.retransmitted_seqs.append(seq)
        else:
            self._sent_at[seq] = self.sim.now_ns
            self.snd_max = seq + 1
        self.segments_sent += 1
        self._transmit(seq, retx)

    def _cut_ssthresh(self):
        self.ssthresh = max(self.flight / 2, 2.0)
        self.ssthresh_reductions += 1

    def start(self):
        self.running = True
        self.send_window()

    def stop(self):
        self.running = False
        self.sim.cancel(self._timer)

    # -- timer
    def _restart_timer(self):
        self.sim.cancel(self._timer)
        self._timer = self.sim.schedule(self.rtt.rto, self._on_timer)

    def _update_timer(self):
        if self.snd_una < self.snd_max:
            self._restart_timer()
        else:
            self.sim.cancel(self._timer)
            self._timer = None

    def _on_timer(self):
        self._timer = None
        if self.running and self.snd_una < self.snd_max:
            self.on_timeout()

    # -- FTP source: always more data to send
    def send_window(self) -> int:
        """Send as many new segments as min(cwnd, rcv_wnd) allows."""
        if not self.running:
            return 0
        usable = math.floor(min(self.cwnd, self.rcv_wnd)) - self.flight
        sent = 0
        while usable > 0:
            self._send(self.snd_nxt)
            self.snd_nxt += 1
            usable -= 1
            sent += 1
        if sent and self._timer is None:
            self._restart_timer()
        return sent

    def ftp_fill(self) -> int:
        return self.send_window()

    # -- ACK processing
    def receive(self, pkt):
        self.on_ack(pkt.seq_num, pkt.sack_blocks)

    def on_ack(self, ack: int, sack_blocks=()):
        if ack > self.snd_max:
            raise ProtocolViolation(f"ACK {ack} beyond highest sent {self.snd_max - 1}")
        if ack > self.snd_una:
            self.on_new_ack(ack, self._rtt_sample(ack))
        elif ack == self.snd_una and self.snd_max > self.snd_una:
            self.on_dupack()

    def _rtt_sample(self, ack: int) -> float | None:
        seq = ack - 1
        if seq in self._retransmitted:
            return None
        sent = self._sent_at.get(seq)
        if sent is None:
            return None
        return (self.sim.now_ns - sent) / NS_PER_S

    def _advance(self, ack: int) -> int:
        acked = ack - self.snd_una
        for s in range(self.snd_una, ack):
            self._sent_at.pop(s, None)
            self._retransmitted.discard(s)
        self.snd_una = ack
        if self.snd_nxt < ack:
            self.snd_nxt = ack
        self.dupacks = 0
        return acked

    def on_new_ack(self, ack: int, rtt_sample: float | None = None):
        if ack > self.snd_max:
            raise ProtocolViolation(f"ACK {ack} beyond highest sent {self.snd_max - 1}")
        if rtt_sample is not None:
            self.rtt.update(rtt_sample)
        acked = self._advance(ack)
        if self.phase == FAST_RECOVERY:
            self._recovery_ack(ack, acked)
        else:
            self._open_window(acked)
        self._update_timer()
        self.send_window()

    def _open_window(self, acked: int):
        if self.phase == SLOW_START and self.cwnd >= self.ssthresh:
            self.phase = CONGESTION_AVOIDANCE
        if self.phase == SLOW_START:
            self.cwnd += 1
            if self.cwnd >= self.ssthresh:
                self.phase = CONGESTION_AVOIDANCE
        else:
            self.cwnd += 1 / self.cwnd

    def _recovery_ack(self, ack: int, acked: int):
        # Reno: leave fast recovery on the first new ACK
        self.cwnd = self.ssthresh
        self.phase = CONGESTION_AVOIDANCE

    def on_dupack(self):
        self.dupacks += 1
        if self.phase == FAST_RECOVERY:
            self._recovery_dupack()
        elif self.dupacks == DUPTHRESH and self._may_fast_retransmit():
            self.fast_retransmits += 1
            self._cut_ssthresh()
            self._enter_recovery()

    def _may_fast_retransmit(self) -> bool:
        return True

    def _enter_recovery(self):
        # Tahoe: back to one segment and resend from the hole
        self.cwnd = 1.0
        self.phase = SLOW_START
        self.snd_nxt = self.snd_una
        self.send_window()
        self._restart_timer()

    def _recovery_dupack(self):
        self.cwnd += 1
        self.send_window()

    def on_timeout(self):
        self.timeouts += 1
        self._cut_ssthresh()
        self.cwnd = 1.0
        self.phase = SLOW_START
        self.dupacks = 0
        self.recover = self.snd_max
        self.snd_nxt = self.snd_una
        self.rtt.back_off()
        self._timer = None
        self.send_window()
        self._restart_timer()


class RenoSender(TcpSender):
    variant = "reno"

    def _enter_recovery(self):
        self.recover = self.snd_nxt
        self.cwnd = self.ssthresh + DUPTHRESH
        self.phase = FAST_RECOVERY
        self._send(self.snd_una)
        self._restart_timer()
        self.send_window()


class NewRenoSender(RenoSender):
    variant = "newreno"

    def _may_fast_retransmit(self) -> bool:
        # avoid a second reduction for losses from a window already being recovered
        return self.snd_una >= self.recover

    def _recovery_ack(self, ack: int, acked: int):
        if ack >= self.recover:
            self.cwnd = self.ssthresh
            self.phase = CONGESTION_AVOIDANCE
            return
        # partial ACK: the next hole is lost as well
        self._send(self.snd_una)
        self.cwnd = max(self.cwnd - acked, 1.0)


class SackSender(RenoSender):
    """Scoreboard-driven recovery: retransmit holes while pipe < cwnd."""

    variant = "sack"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.sacked: set[int] = set()
        self.highest_sacked = -1
        self._recovery_retx: set[int] = set()

    def on_ack(self, ack: int, sack_blocks=()):
        for start, end in sack_blocks:
            if end > self.snd_max:
                raise ProtocolViolation(f"SACK block [{start},{end}) beyond data sent")
            for s in range(max(start, ack), end):
                self.sacked.add(s)
            if end - 1 > self.highest_sacked:
                self.highest_sacked = end - 1
        super().on_ack(ack, sack_blocks)

    def _advance(self, ack):
        acked = super()._advance(ack)
        self.sacked = {s for s in self.sacked if s >= ack}
        self._recovery_retx = {s for s in self._recovery_retx if s >= ack}
        return acked

    def _may_fast_retransmit(self) -> bool:
        return self.snd_una >= self.recover

    def _is_lost(self, seq: int) -> bool:
        above = 0
        for s in self.sacked:
            if s > seq:
                above += 1
                if above >= DUPTHRESH:
                    return True
        return seq == self.snd_una

    def pipe(self) -> int:
        n = 0
        for seq in range(self.snd_una, self.snd_max):
            if seq in self.sacked:
                continue
            if not self._is_lost(seq):
                n += 1
            if seq in self._recovery_retx:
                n += 1
        return n

    def _next_hole(self) -> int | None:
        last = max(self.highest_sacked, self.snd_una)
        for seq in range(self.snd_una, min(last, self.snd_max - 1) + 1):
            if seq not in self.sacked and seq not in self._recovery_retx and self._is_lost(seq):
                return seq
        return None

    def _pipe_send(self):
        pipe = self.pipe()
        while pipe < math.floor(self.cwnd):
            hole = self._next_hole()
            if hole is not None:
                self._recovery_retx.add(hole)
                self._send(hole)
            elif self.snd_max - self.snd_una < self.rcv_wnd:
                self.snd_nxt = self.snd_max
                self._send(self.snd_nxt)
                self.snd_nxt += 1
            else:
                break
            pipe += 1

    def _enter_recovery(self):
        self.recover = self.snd_max
        self.cwnd = self.ssthresh
        self.phase = FAST_RECOVERY
        self.snd_nxt = self.snd_max
        # fast retransmit of the first hole, whatever the pipe estimate says
        self._recovery_retx = {self.snd_una}
        self._send(self.snd_una)
        self._restart_timer()
        self._pipe_send()

    def _recovery_dupack(self):
        self._pipe_send()

    def _recovery_ack(self, ack, acked):
        if ack >= self.recover:
            self.cwnd = self.ssthresh
            self.phase = CONGESTION_AVOIDANCE
            self._recovery_retx = set()
            return
        self._pipe_send()

    def send_window(self):
        if self.phase == FAST_RECOVERY:
            return 0
        return super().send_window()

    def on_timeout(self):
        self.sacked.clear()
        self.highest_sacked = -1
        self._recovery_retx = set()
        super().on_timeout()


class VegasSender(RenoSender):
    """Delay-based avoidance: compare expected and actual rate once per RTT."""

    variant = "vegas"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        p = self.params
        self.alpha = p.vegas_alpha
        self.beta = p.vegas_beta
        self.gamma = p.vegas_gamma
        self.base_rtt = math.inf
        self._epoch_end = 0
        self._epoch_min = math.inf
        self._grow_this_rtt = True
        self.adjustments = 0

    def vegas_window_adjust(self, rtt_sample: float) -> float:
        if not rtt_sample > 0:
            raise InputError(f"RTT sample must be positive, got {rtt_sample}")
        self.base_rtt = min(self.base_rtt, rtt_sample)
        self.adjustments += 1
        expected = self.cwnd / self.base_rtt
        actual = self.cwnd / rtt_sample
        diff = (expected - actual) * self.base_rtt
        if self.phase == SLOW_START:
            if diff > self.gamma:
                self.phase = CONGESTION_AVOIDANCE
                target = self.cwnd * self.base_rtt / rtt_sample
                self.cwnd = max(min(self.cwnd, target + 1), 1.0)
                self.ssthresh = max(min(self.ssthresh, self.cwnd - 1), 2.0)
            else:
                self._grow_this_rtt = not self._grow_this_rtt
        elif diff < self.alpha:
            self.cwnd += 1
        elif diff > self.beta:
            self.cwnd = max(self.cwnd - 1, 1.0)
        self.cwnd = min(self.cwnd, float(self.rcv_wnd))
        return self.cwnd

    def on_new_ack(self, ack, rtt_sample=None):
        if rtt_sample is not None:
            self.base_rtt = min(self.base_rtt, rtt_sample)
            self._epoch_min = min(self._epoch_min, rtt_sample)
        super().on_new_ack(ack, rtt_sample)

    def _open_window(self, acked):
        if self.snd_una > self._epoch_end:
            if self._epoch_min < math.inf:
                self.vegas_window_adjust(self._epoch_min)
            self._epoch_end = self.snd_nxt
            self._epoch_min = math.inf
        if self.phase == SLOW_START:
            if self._grow_this_rtt:
                self.cwnd += 1
            if self.cwnd >= self.ssthresh:
                self.phase = CONGESTION_AVOIDANCE

    def _recovery_ack(self, ack, acked):
        super()._recovery_ack(ack, acked)
        self._epoch_end = self.snd_max
        self._epoch_min = math.inf

    def on_timeout(self):
        super().on_timeout()
        self._grow_this_rtt = True
        self._epoch_end = self.snd_max
        self._epoch_min = math.inf


SENDERS = {
    "tahoe": TcpSender,
    "reno": RenoSender,
    "newreno": NewRenoSender,
    "vegas": VegasSender,
    "sack": SackSender,
}
VARIANTS = tuple(SENDERS)


def parse_variant(name: str) -> str:
    key = name.strip().lower()
    if key not in SENDERS:
        raise InputError(f"unknown TCP variant {name!r}; expected one of {', '.join(VARIANTS)}")
    return key


# ----------------------------------------------------------------- receiver

class TcpReceiver:
    """Cumulative-ACK sink; one immediate ACK per arriving segment."""

    def __init__(self, sack: bool = False):
        self.sack = sack
        self.rcv_nxt = 0
        self.out_of_order: set[int] = set()
        self.sack_blocks: list[tuple[int, int]] = []
        self.delivered: list[int] = []  # in-order stream handed to the application
        self.duplicates = 0

    def _block_around(self, seq):
        lo = seq
        while lo - 1 in self.out_of_order:
            lo -= 1
        hi = seq + 1
        while hi in self.out_of_order:
            hi += 1
        return lo, hi

    def on_data(self, seq: int) -> int:
        """Absorb a data segment and return the cumulative ACK to send."""
        if seq < self.rcv_nxt or seq in self.out_of_order:
            self.duplicates += 1
            return self.rcv_nxt
        if seq == self.rcv_nxt:
            self.rcv_nxt += 1
            self.delivered.append(seq)
            while self.rcv_nxt in self.out_of_order:
                self.out_of_order.discard(self.rcv_nxt)
                self.delivered.append(self.rcv_nxt)
                self.rcv_nxt += 1
            self.sack_blocks = [b for b in self.sack_blocks if b[0] > self.rcv_nxt]
            self.sack_blocks = [self._block_around(b[0]) for b in self.sack_blocks]
        else:
            self.out_of_order.add(seq)
            if self.sack:
                first = self._block_around(seq)
                rest = [self._block_around(b[0]) for b in self.sack_blocks]
                rest = [b for b in rest if b != first]
                self.sack_blocks = [first] + rest[:2]
        return self.rcv_nxt


def receiver_on_data(receiver: TcpReceiver, seq: int) -> int:
    return receiver.on_data(seq)


# ---------------------------------------------------------------- CBR / UDP

@dataclass
class CbrSource:
    rate: float          # bits per second
    packet_size: int = DATA_SIZE
    start_at: float = 0.0
    stop_at: float = math.inf

    @property
    def interval(self) -> float:
        return self.packet_size * 8 / self.rate

    @property
    def interval_ns(self) -> int:
        return to_ns(self.interval)


# ------------------------------------------------------------------ agents

class TcpAgent:
    """Binds a sender to a network port; one flow from src to dst."""

    def __init__(self, network: Network, flow_id: int, variant: str,
                 src: tuple[int, int], dst: tuple[int, int], params: TcpParams | None = None,
                 overhead: float = 0.0):
        self.network = network
        self.flow_id = flow_id
        self.src_node, self.src_port = src
        self.dst_node, self.dst_port = dst
        cls = SENDERS[parse_variant(variant)]
        self.sender = cls(network.sim, self._transmit, params)
        # random per-segment host delay, uniform in [0, overhead); breaks drop-tail phase lock
        self.overhead_ns = to_ns(overhead)
        self._release_at = 0
        network.attach(self.src_node, self.src_port, self)

    def _transmit(self, seq, retx):
        net = self.network
        pkt = Packet(net.next_uid(), self.flow_id, "tcp", self.sender.segment_size,
                     self.src_node, self.src_port, self.dst_node, self.dst_port, seq)
        if self.overhead_ns <= 0:
            net.send(pkt)
            return
        now = net.sim.now_ns
        # releases stay in send order, so the jitter never reorders segments
        release = max(now + int(net.rng.random() * self.overhead_ns), self._release_at)
        self._release_at = release
        net.sim.schedule_ns(release - now, net.send, pkt)

    def receive(self, pkt):
        self.sender.receive(pkt)

    def start(self):
        self.sender.start()

    def stop(self):
        self.sender.stop()


class TcpSinkAgent:
    def __init__(self, network: Network, node: int, port: int, sack: bool = False,
                 ack_size: int = ACK_SIZE):
        self.network = network
        self.node = node
        self.port = port
        self.ack_size = ack_size
        self.receiver = TcpReceiver(sack=sack)
        network.attach(node, port, self)

    def receive(self, pkt):
        ack = self.receiver.on_data(pkt.seq_num)
        blocks = tuple(self.receiver.sack_blocks) if self.receiver.sack else ()
        net = self.network
        net.send(Packet(net.next_uid(), pkt.flow_id, "ack", self.ack_size,
                        self.node, self.port, pkt.src_node, pkt.src_port, ack,
                        sack_blocks=blocks))


class CbrAgent:
    """UDP source emitting fixed-size packets at a fixed interval."""

    def __init__(self, network: Network, flow_id: int, source: CbrSource,
                 src: tuple[int, int], dst: tuple[int, int]):
        self.network = network
        self.flow_id = flow_id
        self.source = source
        self.src_node, self.src_port = src
        self.dst_node, self.dst_port = dst
        self.seq = 0
        self._stop_ns = to_ns(source.stop_at) if math.isfinite(source.stop_at) else None
        network.attach(self.src_node, self.src_port, self)

    def schedule(self, jitter: float = 0.0):
        sim = self.network.sim
        sim.schedule_ns(max(to_ns(self.source.start_at + jitter) - sim.now_ns, 0), self._emit)

    def _emit(self):
        net = self.network
        now = net.sim.now_ns
        if self._stop_ns is not None and now >= self._stop_ns:
            return
        cbr_emit(self, now)
        net.sim.schedule_ns(self.source.interval_ns, self._emit)

    def receive(self, pkt):
        pass


def cbr_emit(agent: CbrAgent, now_ns: int) -> tuple[Packet, int]:
    """Send one CBR packet; returns it and the next departure time (ns)."""
    net = agent.network
    src = agent.source
    pkt = Packet(net.next_uid(), agent.flow_id, "cbr", src.packet_size,
                 agent.src_node, agent.src_port, agent.dst_node, agent.dst_port, agent.seq)
    agent.seq += 1
    net.send(pkt)
    return pkt, now_ns + src.interval_ns


class NullSink:
    """Absorbs CBR traffic."""

    def __init__(self, network: Network, node: int, port: int):
        self.received = 0
        network.attach(node, port, self)

    def receive(self, pkt):
        self.received += 1
