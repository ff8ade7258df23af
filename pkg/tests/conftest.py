import collections
import sys

import pytest

from tcpsim.engine import Simulator
from tcpsim.transport import SENDERS, TcpParams, TcpReceiver


class LossyPipe:
    """In-order one-way channel between a sender and a receiver.

    Segments listed in ``lose`` vanish on their first transmission.  One
    segment is delivered per millisecond tick and its ACK returns at once,
    so a run is fully deterministic and easy to trace by hand.
    """

    def __init__(self, variant, lose=(), init_cwnd=10, window=64, sack=False):
        self.sim = Simulator()
        self.fifo = collections.deque()
        self.lose = set(lose)
        self.lost = []
        self.receiver = TcpReceiver(sack=sack)
        params = TcpParams(init_cwnd=init_cwnd, window=window)
        self.sender = SENDERS[variant](self.sim, self._transmit, params)
        self.log = []  # (ack, phase, cwnd, ssthresh) after each ACK

    def _transmit(self, seq, retx):
        if seq in self.lose and not retx:
            self.lose.discard(seq)
            self.lost.append(seq)
            return
        self.fifo.append(seq)

    def _tick(self):
        if self.fifo:
            seq = self.fifo.popleft()
            ack = self.receiver.on_data(seq)
            blocks = tuple(self.receiver.sack_blocks) if self.receiver.sack else ()
            self.sender.on_ack(ack, blocks)
            s = self.sender
            self.log.append((ack, s.phase, s.cwnd, s.ssthresh))
        self.sim.schedule(0.001, self._tick)

    def run(self, until=0.5):
        self.sender.start()
        self.sim.schedule(0.001, self._tick)
        self.sim.run_until(until)
        return self


@pytest.fixture
def lossy_pipe():
    return LossyPipe


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
