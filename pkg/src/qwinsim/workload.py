"""Workload generation: fio-style closed loops and open-loop Poisson arrivals.

A closed-loop source keeps exactly iodepth*numjobs requests in flight per
tenant: every completion immediately issues a replacement on the same job
slot (zero think time).  An open-loop source draws exponential inter-arrival
gaps at a configured rate, optionally alternating between a base phase and a
burst phase (off first, then on, repeating).
"""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass, field

from .sim_core import SEC, EventKind

READ = True
WRITE = False

CLOSED = "closed_loop"
OPEN = "open_loop"


class Request:
    """One I/O request.  Timestamps are integer ns; -1 means "not yet"."""

    __slots__ = (
        "tenant", "lc", "is_read", "size",
        "arrive_at", "enqueued_at", "dequeued_at", "completed_at",
        "seq", "slot", "core", "finish_at",
    )

    NOT_SCHEDULED = 1 << 62  # finish_at sentinel: not yet in service

    def __init__(self, tenant, lc, is_read, size, arrive_at, slot=-1):
        self.tenant = tenant
        self.lc = lc
        self.is_read = is_read
        self.size = size
        self.arrive_at = arrive_at
        self.enqueued_at = -1
        self.dequeued_at = -1
        self.completed_at = -1
        self.seq = -1          # per-tenant arrival index, stamped at enqueue
        self.slot = slot       # closed-loop job slot, -1 for open loop
        self.core = None       # core currently serving this request
        self.finish_at = Request.NOT_SCHEDULED  # set once device service starts

    @property
    def trace_id(self):
        return (self.tenant, self.seq)

    def __repr__(self):
        op = "R" if self.is_read else "W"
        return f"<Req {self.tenant}#{self.seq} {op}{self.size} t={self.arrive_at}>"


@dataclass(frozen=True)
class Burst:
    """On/off modulation for open-loop sources: off_ns at base rate, then on_ns at rate_per_s."""
    on_ns: int
    off_ns: int
    rate_per_s: float

    def validate(self):
        if self.on_ns <= 0 or self.off_ns < 0:
            raise ValueError("burst on_ns must be > 0 and off_ns >= 0")
        if self.rate_per_s <= 0:
            raise ValueError("burst rate_per_s must be > 0")


@dataclass(frozen=True)
class WorkloadSpec:
    mode: str = CLOSED
    sizes: tuple = ((4096, 1.0),)      # (bytes, weight) pairs
    read_ratio: float = 1.0
    iodepth: int = 16                  # closed loop
    numjobs: int = 1                   # closed loop
    rate_per_s: float = 0.0            # open loop, base rate
    burst: Burst | None = None         # open loop only

    def validate(self):
        if self.mode not in (CLOSED, OPEN):
            raise ValueError(f"unknown workload mode {self.mode!r}")
        if not 0.0 <= self.read_ratio <= 1.0:
            raise ValueError("read_ratio must be in [0, 1]")
        if not self.sizes:
            raise ValueError("sizes must be non-empty")
        for size, weight in self.sizes:
            if size <= 0 or weight <= 0:
                raise ValueError("sizes entries must have positive size and weight")
        if self.mode == CLOSED:
            if self.iodepth < 1 or self.numjobs < 1:
                raise ValueError("closed loop needs iodepth >= 1 and numjobs >= 1")
        else:
            if self.rate_per_s <= 0:
                raise ValueError("open loop needs rate_per_s > 0")
            if self.burst is not None:
                self.burst.validate()

    @property
    def in_flight_cap(self) -> int:
        return self.iodepth * self.numjobs if self.mode == CLOSED else 0


def _fio(bs, iodepth, numjobs, read_ratio):
    return WorkloadSpec(mode=CLOSED, sizes=((bs, 1.0),), read_ratio=read_ratio,
                        iodepth=iodepth, numjobs=numjobs)


# Named workload presets.  A-D are 4KB latency-critical style loads at
# descending read ratios; E-H are 64KB throughput loads; J and K approximate
# database/webserver request mixes as closed loops over a size distribution;
# P is a deeper 4KB mixed load.
PRESETS: dict[str, WorkloadSpec] = {
    "A": _fio(4096, 16, 8, 1.00),
    "B": _fio(4096, 16, 8, 0.95),
    "C": _fio(4096, 16, 8, 0.90),
    "D": _fio(4096, 16, 8, 0.85),
    "E": _fio(65536, 16, 2, 1.00),
    "F": _fio(65536, 16, 2, 0.99),
    "G": _fio(65536, 16, 2, 0.95),
    "H": _fio(65536, 16, 2, 0.90),
    # OLTP-like: small random reads/writes, 2:1 read:write, 2KB/8KB mix.
    "J": WorkloadSpec(mode=CLOSED, sizes=((2048, 0.5), (8192, 0.5)),
                      read_ratio=0.67, iodepth=8, numjobs=8),
    # Webserver-like: mostly reads across small-to-medium sizes plus log appends.
    "K": WorkloadSpec(mode=CLOSED, sizes=((4096, 0.35), (16384, 0.40), (65536, 0.25)),
                      read_ratio=0.95, iodepth=4, numjobs=16),
    "P": _fio(4096, 32, 8, 0.90),
}

# Preset -> conventional tenant class ("lc" or "be"); a config may override.
PRESET_CLASS = {
    "A": "lc", "B": "lc", "C": "lc", "D": "lc",
    "E": "be", "F": "be", "G": "be", "H": "be",
    "J": "lc", "K": "lc", "P": "lc",
}


class WorkloadSource:
    """Per-tenant request generator bound to one RNG stream.

    The enqueue callback is supplied by the backend at start(); the source
    only decides *what* arrives *when*.
    """

    def __init__(self, spec: WorkloadSpec, rng, tenant_label: str, lc: bool):
        spec.validate()
        self.spec = spec
        self.rng = rng
        self.tenant = tenant_label
        self.lc = lc
        self._closed = spec.mode == CLOSED
        self.in_flight = 0
        self.generated = 0
        self.recycle = True   # debug harnesses set False to keep request objects alive
        self._enqueue = None
        self._engine = None
        # Pre-computed op sampler: constant when the mix is pure.
        rr = spec.read_ratio
        self._rr = rr
        self._op_const = READ if rr >= 1.0 else (WRITE if rr <= 0.0 else None)
        # Pre-computed size sampler: either a constant or cumulative weights.
        sizes = spec.sizes
        if len(sizes) == 1:
            self._size_const = sizes[0][0]
            self._size_cum = None
            self._size_vals = None
        else:
            self._size_const = None
            total = sum(w for _, w in sizes)
            acc = list(itertools.accumulate(w / total for _, w in sizes))
            acc[-1] = 1.0
            self._size_cum = acc
            self._size_vals = [s for s, _ in sizes]

    # -- draws ------------------------------------------------------------

    def _draw_size(self):
        if self._size_const is not None:
            return self._size_const
        return self._size_vals[bisect.bisect_left(self._size_cum, self.rng.random())]

    def _draw_op(self):
        op = self._op_const
        if op is not None:
            return op
        return self.rng.random() < self._rr

    def make_request(self, arrive_at, slot=-1) -> Request:
        self.generated += 1
        self.in_flight += 1
        return Request(self.tenant, self.lc, self._draw_op(), self._draw_size(),
                       arrive_at, slot)

    # -- lifecycle ---------------------------------------------------------

    def start(self, engine, enqueue):
        """Schedule the initial arrivals.  enqueue(request, now) admits one request."""
        self._enqueue = enqueue
        self._engine = engine
        if self.spec.mode == CLOSED:
            # The whole iodepth*numjobs population arrives at t=0, one event
            # per request so arrival order is well defined.
            for slot in range(self.spec.in_flight_cap):
                req = self.make_request(0, slot)
                engine.schedule(0, EventKind.REQUEST_ARRIVAL, self._arrive, req)
        else:
            self._schedule_next_arrival(0)

    def _arrive(self, req, now):
        self._enqueue(req, now)

    # -- open loop ----------------------------------------------------------

    def _rate_at(self, t) -> float:
        """Arrival rate in requests/ns at virtual time t."""
        spec = self.spec
        burst = spec.burst
        if burst is None:
            return spec.rate_per_s / SEC
        cycle = burst.on_ns + burst.off_ns
        # Off phase first, then the burst.
        if (t % cycle) < burst.off_ns:
            return spec.rate_per_s / SEC
        return burst.rate_per_s / SEC

    def _phase_end(self, t) -> int:
        burst = self.spec.burst
        cycle = burst.on_ns + burst.off_ns
        pos = t % cycle
        base = t - pos
        return base + (burst.off_ns if pos < burst.off_ns else cycle)

    def _schedule_next_arrival(self, now):
        # Exponential gap at the current phase rate; if it crosses a phase
        # boundary, restart the draw from the boundary (memorylessness makes
        # this an exact piecewise-Poisson process).
        t = now
        if self.spec.burst is None:
            t += round(self.rng.expovariate(self._rate_at(t)))
        else:
            while True:
                gap = self.rng.expovariate(self._rate_at(t))
                end = self._phase_end(t)
                if t + gap <= end:
                    t += round(gap)
                    break
                t = end
        t = max(t, now)
        req = self.make_request(t)
        self._engine.schedule(t, EventKind.REQUEST_ARRIVAL, self._open_arrive, req)

    def _open_arrive(self, req, now):
        self._enqueue(req, now)
        self._schedule_next_arrival(now)

    # -- completions ----------------------------------------------------------

    def on_completion(self, req, now):
        """Closed loop: recycle the completed request as its slot's replacement.

        Reusing the object keeps the hot path allocation-free; nothing holds a
        reference to a completed request once its latency has been recorded.
        Returns the replacement (arriving now) or None for open loops.
        """
        self.in_flight -= 1
        if not self._closed:
            return None
        if not self.recycle:
            return self.make_request(now, req.slot)
        self.generated += 1
        self.in_flight += 1
        # Only fields the enqueue/serve/start path does not overwrite need
        # refreshing; the stale timestamps are dead the moment this returns.
        # The op/size draws are inlined -- this runs once per completion.
        op = self._op_const
        req.is_read = op if op is not None else (self.rng.random() < self._rr)
        size = self._size_const
        if size is None:
            size = self._size_vals[bisect.bisect_left(self._size_cum,
                                                      self.rng.random())]
        req.size = size
        req.arrive_at = now
        req.finish_at = Request.NOT_SCHEDULED
        return req
