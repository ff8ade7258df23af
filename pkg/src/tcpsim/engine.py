"""Discrete-event core: an integer-nanosecond clock and a heap of events.

Events are ordered by ``(fire_at, seq)`` where ``seq`` is a per-simulator
insertion counter, so events scheduled for the same instant fire in the
order they were scheduled.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

from .errors import InputError

NS_PER_S = 1_000_000_000


def to_ns(seconds: float) -> int:
    return round(seconds * NS_PER_S)


def to_seconds(ns: int) -> float:
    return ns / NS_PER_S


class EventHandle:
    __slots__ = ("fire_at", "seq", "action", "args", "state")

    PENDING, FIRED, CANCELLED = 0, 1, 2

    def __init__(self, fire_at, seq, action, args):
        self.fire_at = fire_at
        self.seq = seq
        self.action = action
        self.args = args
        self.state = self.PENDING

    @property
    def pending(self):
        return self.state == self.PENDING

    def __lt__(self, other):
        return (self.fire_at, self.seq) < (other.fire_at, other.seq)

    def __repr__(self):
        return f"EventHandle(fire_at={self.fire_at}ns, seq={self.seq})"


@dataclass(frozen=True)
class SimStats:
    events_processed: int
    final_time: float


class Simulator:
    def __init__(self):
        self._heap: list[EventHandle] = []
        self._seq = 0
        self.now_ns = 0
        self.events_processed = 0
        self.finished = False

    @property
    def now(self) -> float:
        return self.now_ns / NS_PER_S

    def schedule(self, delay: float, action, *args) -> EventHandle:
        """Run ``action(*args)`` after ``delay`` seconds of simulated time."""
        if delay < 0:
            raise InputError(f"negative delay {delay!r}")
        return self.schedule_ns(to_ns(delay), action, *args)

    def schedule_ns(self, delay_ns: int, action, *args) -> EventHandle:
        if delay_ns < 0:
            raise InputError(f"negative delay {delay_ns}ns")
        if self.finished:
            raise InputError("simulator already finished")
        ev = EventHandle(self.now_ns + delay_ns, self._seq, action, args)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def cancel(self, handle: EventHandle | None) -> bool:
        if handle is None or handle.state != EventHandle.PENDING:
            return False
        handle.state = EventHandle.CANCELLED
        return True

    def pending(self) -> int:
        return sum(1 for ev in self._heap if ev.state == EventHandle.PENDING)

    def run_until(self, t_end: float) -> SimStats:
        end_ns = to_ns(t_end)
        if end_ns < self.now_ns:
            raise InputError(f"run_until({t_end}) is before now ({self.now})")
        heap = self._heap
        processed = 0
        while heap and heap[0].fire_at <= end_ns:
            ev = heapq.heappop(heap)
            if ev.state != EventHandle.PENDING:
                continue
            ev.state = EventHandle.FIRED
            self.now_ns = ev.fire_at
            processed += 1
            ev.action(*ev.args)
        # leave the clock at t_end only when later work is still queued
        if any(ev.state == EventHandle.PENDING for ev in heap):
            self.now_ns = end_ns
        self.events_processed += processed
        return SimStats(processed, self.now)

    def finish(self):
        self.finished = True
