"""Discrete-event engine: virtual time, an ordered event queue, seeded RNG streams.

Time is integer nanoseconds throughout the simulator.  Events fire in
(fire_at, seq) order, where seq is a monotone insertion counter, so two events
scheduled for the same instant are handled in the order they were scheduled.
That single rule is what makes whole runs replayable bit-for-bit.
"""

from __future__ import annotations

import heapq
import random
from enum import IntEnum
from typing import Callable, NamedTuple

import numpy as np

SimTime = int  # nanoseconds

# Handy unit multipliers for building SimTime values.
US = 1_000
MS = 1_000_000
SEC = 1_000_000_000


class EventKind(IntEnum):
    REQUEST_ARRIVAL = 0
    IO_COMPLETE = 1
    CORE_WAKE = 2
    METRIC_TICK = 3
    POLICY_PROBE = 4


class Event(NamedTuple):
    fire_at: int
    seq: int
    kind: int
    payload: object
    fn: Callable


class SimStats:
    """Bookkeeping for the no-event-loss invariant: scheduled == processed + pending."""

    __slots__ = ("scheduled", "processed", "by_kind")

    def __init__(self):
        self.scheduled = 0
        self.processed = 0
        self.by_kind = [0] * len(EventKind)

    def as_dict(self):
        return {
            "scheduled": self.scheduled,
            "processed": self.processed,
            "by_kind": {EventKind(k).name: n for k, n in enumerate(self.by_kind) if n},
        }


class Engine:
    """Minimal event loop.  Handlers are called as fn(payload, now)."""

    def __init__(self, trace: bool = False):
        self.now: SimTime = 0
        self.stats = SimStats()
        self._heap: list[Event] = []
        self._seq = 0
        # Optional event trace: (fire_at, seq, kind, payload id).  Used by the
        # replay tests; costs nothing when disabled.
        self.trace: list | None = [] if trace else None

    def schedule(self, fire_at: SimTime, kind: int, fn: Callable, payload=None) -> tuple:
        """Queue fn(payload, now) to run at fire_at; returns the event tuple.

        Events are plain tuples shaped like Event; building one is on the
        hot path, so the NamedTuple constructor is deliberately avoided.
        """
        if fire_at < self.now:
            raise ValueError(f"cannot schedule event at {fire_at} ns; now is {self.now} ns")
        self._seq += 1
        ev = (fire_at, self._seq, kind, payload, fn)
        heapq.heappush(self._heap, ev)
        self.stats.scheduled += 1
        return ev

    def pending(self) -> int:
        return len(self._heap)

    def run_until(self, end: SimTime) -> SimStats:
        """Process every event with fire_at <= end; leave later events queued."""
        heap = self._heap
        pop = heapq.heappop
        stats = self.stats
        by_kind = stats.by_kind
        trace = self.trace
        processed = 0
        while heap and heap[0][0] <= end:
            fire_at, seq, kind, payload, fn = pop(heap)
            self.now = fire_at
            by_kind[kind] += 1
            processed += 1
            if trace is not None:
                trace.append((fire_at, seq, kind,
                              getattr(payload, "trace_id", payload)))
            fn(payload, fire_at)
        stats.processed += processed
        if end > self.now:
            self.now = end
        return stats


def make_stream(seed: int, stream_id: int) -> random.Random:
    """Derive an independent, reproducible RNG stream from (seed, stream_id).

    Key derivation goes through numpy's SeedSequence so distinct stream ids
    give statistically independent streams even for adjacent seeds.  The
    returned generator is a stdlib random.Random (C-speed variate methods).
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream_id,))
    derived = int.from_bytes(ss.generate_state(4).tobytes(), "little")
    return random.Random(derived)


def make_np_stream(seed: int, stream_id: int) -> np.random.Generator:
    """Same key derivation as make_stream, but a numpy Generator.

    Used where variates are consumed in bulk (the device draws a block of
    normals/uniforms at a time); PCG64 keyed by the identical SeedSequence
    keeps the stream independent of every make_stream() stream.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream_id,))
    return np.random.Generator(np.random.PCG64(ss))
