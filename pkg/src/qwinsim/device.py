"""Stochastic storage device and the online service-time estimators.

Service times are lognormal around a per-(op, size) median, with an optional
Bernoulli latency spike multiplier modelling internal device hiccups (GC,
wear-levelling).  The device serves at most `capacity` requests concurrently;
beyond that, submissions wait in an internal FIFO.

The estimators condense completions into the two statistics the allocation
model consumes: an EWMA of observed service time and a sliding-window
histogram quantile of it.  "Service time" here is what a worker core
observes: dequeue-to-completion, including any device-internal queueing.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from statistics import NormalDist

from .sim_core import EventKind, MS, US

_INV_CDF = NormalDist().inv_cdf


@dataclass(frozen=True)
class DeviceParams:
    read_median_us: float = 100.0
    write_median_us: float = 100.0
    sigma: float = 0.3
    p_spike: float = 0.001
    m_spike: float = 20.0
    capacity: int = 8
    ref_block_bytes: int = 4096
    # Median scales with (size/ref)**size_exponent; 0.5 gives a 64KB request
    # about 4x the 4KB median, a reasonable NVMe large-block slowdown.
    size_exponent: float = 0.5

    def validate(self):
        if self.read_median_us <= 0 or self.write_median_us <= 0:
            raise ValueError("device medians must be > 0")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0.0 <= self.p_spike <= 1.0:
            raise ValueError("p_spike must be in [0, 1]")
        if self.m_spike < 1.0:
            raise ValueError("m_spike must be >= 1")
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.ref_block_bytes <= 0:
            raise ValueError("ref_block_bytes must be > 0")

    # -- analytic helpers ---------------------------------------------------

    def median_ns(self, is_read: bool, size: int) -> float:
        base = self.read_median_us if is_read else self.write_median_us
        scale = (size / self.ref_block_bytes) ** self.size_exponent
        return base * 1000.0 * scale

    def nominal_mean_ns(self, is_read: bool, size: int) -> float:
        """Analytic mean of the service distribution (estimator cold-start seed)."""
        m = self.median_ns(is_read, size) * math.exp(self.sigma ** 2 / 2.0)
        return m * (1.0 + self.p_spike * (self.m_spike - 1.0))

    def nominal_quantile_ns(self, is_read: bool, size: int, q: float) -> float:
        """Approximate q-quantile of the service distribution (cold-start seed only)."""
        base = self.median_ns(is_read, size)
        if self.sigma > 0 and 0.0 < q < 1.0:
            base *= math.exp(self.sigma * _INV_CDF(q))
        if self.p_spike > 0 and q > 1.0 - self.p_spike:
            base *= self.m_spike
        return base


def sample_service_time(params: DeviceParams, is_read: bool, size: int, rng) -> int:
    """Draw one service time in integer ns (>= 1)."""
    mu = math.log(params.median_ns(is_read, size))
    t = rng.lognormvariate(mu, params.sigma)
    if params.p_spike > 0 and rng.random() < params.p_spike:
        t *= params.m_spike
    return max(1, round(t))


class Device:
    """Runtime device instance: capacity-bounded concurrency plus a FIFO.

    The backend supplies the completion callback; the device only schedules
    IO_COMPLETE events and keeps its occupancy/FIFO accounting.

    Variates are drawn from a numpy Generator in fixed-size blocks (one
    standard normal and one uniform per request) purely for speed; the
    distribution is exactly the one sample_service_time() implements, and the
    consumed sequence depends only on the stream key, so runs replay
    bit-for-bit.
    """

    DRAW_BLOCK = 8192

    def __init__(self, params: DeviceParams, rng, engine):
        params.validate()
        self.params = params
        self.rng = rng               # numpy Generator (see make_np_stream)
        self.engine = engine
        self.capacity = params.capacity  # plain attribute: hot-path load
        self.in_service = 0
        self.fifo = deque()
        self.on_complete_fn = None   # set by the backend at wiring time
        self.started = 0
        # Per-(op, size) mu cache so the hot path never recomputes log/pow.
        self._mu = {}
        self._sigma = params.sigma
        self._p_spike = params.p_spike
        self._m_spike = params.m_spike
        self._z = None               # block of N(0,1) draws
        self._u = None               # block of U[0,1) draws
        self._zi = Device.DRAW_BLOCK  # exhausted -> refill on first use

    def _mu_for(self, is_read, size):
        key = (is_read, size)
        mu = self._mu.get(key)
        if mu is None:
            mu = math.log(self.params.median_ns(is_read, size))
            self._mu[key] = mu
        return mu

    def _start(self, req, now):
        i = self._zi
        if i == Device.DRAW_BLOCK:
            # .tolist() hands back plain Python floats; scalar math on numpy
            # float64 objects would cost more than the draws themselves.
            self._z = self.rng.standard_normal(Device.DRAW_BLOCK).tolist()
            self._u = self.rng.random(Device.DRAW_BLOCK).tolist()
            i = 0
        self._zi = i + 1
        t = math.exp(self._mu_for(req.is_read, req.size) + self._sigma * self._z[i])
        if self._u[i] < self._p_spike:
            t *= self._m_spike
        self.in_service += 1
        self.started += 1
        fire_at = now + (st if (st := round(t)) > 0 else 1)
        req.finish_at = fire_at
        self.engine.schedule(fire_at, EventKind.IO_COMPLETE,
                             self.on_complete_fn, req)

    def submit(self, req, now):
        """Begin service immediately if a slot is free, else queue internally."""
        if self.in_service < self.capacity:
            self._start(req, now)
        else:
            self.fifo.append(req)

    def release_slot(self, now):
        """Called by the backend once per completion, before reusing the slot."""
        self.in_service -= 1
        if self.fifo:
            self._start(self.fifo.popleft(), now)


# ---------------------------------------------------------------------------
# Online estimators
# ---------------------------------------------------------------------------

# Service-time histogram layout: 1us-wide linear buckets up to 100ms, then
# ~5%-wide geometric buckets up to 10s.  Bucket i's upper edge is _EDGE[i].
_LINEAR_LIMIT_NS = 100 * MS
_LINEAR_BUCKETS = _LINEAR_LIMIT_NS // US          # 100_000
_LOG_RATIO = 1.05
_LOG_BUCKETS = math.ceil(math.log(10_000 * MS / _LINEAR_LIMIT_NS) / math.log(_LOG_RATIO))
_N_BUCKETS = _LINEAR_BUCKETS + _LOG_BUCKETS
_LOG_INV = 1.0 / math.log(_LOG_RATIO)


def _service_bucket(ns: int) -> int:
    if ns < _LINEAR_LIMIT_NS:
        return ns // US
    b = _LINEAR_BUCKETS + int(math.log(ns / _LINEAR_LIMIT_NS) * _LOG_INV)
    return b if b < _N_BUCKETS else _N_BUCKETS - 1


def _service_bucket_edge(idx: int) -> int:
    """Upper edge of bucket idx, in ns."""
    if idx < _LINEAR_BUCKETS:
        return (idx + 1) * US
    return round(_LINEAR_LIMIT_NS * _LOG_RATIO ** (idx - _LINEAR_BUCKETS + 1))


class ServiceEstimator:
    """EWMA mean + sliding-window histogram quantile of service times.

    The quantile is "the smallest bucket upper edge whose cumulative count
    reaches q of the window".  A pointer into the histogram is nudged
    incrementally on every update, so reads cost O(movement) instead of a
    full rescan; service-time distributions drift slowly, so movement is
    tiny in practice.
    """

    __slots__ = ("alpha", "window", "quantile", "mean", "samples",
                 "_counts", "_ring", "_tail_idx", "_cum",
                 "nominal_mean", "nominal_tail")

    def __init__(self, alpha=0.01, window=10_000, quantile=0.999,
                 nominal_mean_ns=100_000.0, nominal_tail_ns=260_000):
        if not 0 < alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if window < 1:
            raise ValueError("window must be >= 1")
        if not 0 < quantile <= 1:
            raise ValueError("quantile must be in (0, 1]")
        self.alpha = alpha
        self.window = window
        self.quantile = quantile
        self.mean = 0.0
        self.samples = 0
        self._counts = [0] * _N_BUCKETS
        self._ring = deque()
        self._tail_idx = 0
        self._cum = 0
        self.nominal_mean = float(nominal_mean_ns)
        self.nominal_tail = int(nominal_tail_ns)

    def update(self, service_ns: int):
        # EWMA seeded with the first observation so early windows are not
        # dragged toward zero.
        if self.samples == 0:
            self.mean = float(service_ns)
        else:
            self.mean += self.alpha * (service_ns - self.mean)
        self.samples += 1

        b = (service_ns // US) if service_ns < _LINEAR_LIMIT_NS else _service_bucket(service_ns)
        ring = self._ring
        counts = self._counts
        if len(ring) >= self.window:
            old = ring.popleft()
            counts[old] -= 1
            if old <= self._tail_idx:
                self._cum -= 1
        ring.append(b)
        counts[b] += 1
        if b <= self._tail_idx:
            self._cum += 1

    @property
    def mean_ns(self) -> float:
        return self.mean if self.samples else self.nominal_mean

    @property
    def tail_ns(self) -> int:
        n = len(self._ring)
        if n == 0:
            return self.nominal_tail
        # ceil(q*n) with a guard against float dust on exact multiples.
        need = math.ceil(self.quantile * n - 1e-9)
        if need < 1:
            need = 1
        counts = self._counts
        idx = self._tail_idx
        cum = self._cum
        while cum < need:
            idx += 1
            cum += counts[idx]
        while idx > 0 and cum - counts[idx] >= need:
            cum -= counts[idx]
            idx -= 1
        self._tail_idx = idx
        self._cum = cum
        return _service_bucket_edge(idx)
