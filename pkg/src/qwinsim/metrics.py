"""Latency histograms, per-interval statistics, and CSV emission.

All latency accounting uses one shared geometric bucket layout (about 5%
relative width from 1us to 10s), so a bucket index computed once per
completion can feed several histograms.  Quantiles follow the rule "smallest
bucket upper edge whose cumulative fraction reaches q", which bounds the
error by one bucket width.
"""

from __future__ import annotations

import math
from bisect import bisect_left

from .sim_core import SEC, US

# ---------------------------------------------------------------------------
# Shared bucket layout
# ---------------------------------------------------------------------------

_RATIO = 1.05


def _build_edges():
    edges = []
    v = 1.0 * US
    while True:
        edges.append(round(v))
        if edges[-1] >= 10 * SEC:
            break
        v *= _RATIO
    return tuple(edges)


EDGES = _build_edges()
N_BUCKETS = len(EDGES)
_LAST = N_BUCKETS - 1


def bucket_of(latency_ns: int) -> int:
    b = bisect_left(EDGES, latency_ns)
    return b if b < N_BUCKETS else _LAST


def bucket_edge(idx: int) -> int:
    return EDGES[idx]


def quantile_from_counts(counts, n: int, q: float):
    """Smallest bucket upper edge with cumulative fraction >= q; None if empty."""
    if n <= 0:
        return None
    need = math.ceil(q * n - 1e-9)
    if need < 1:
        need = 1
    if need > n:
        need = n
    cum = 0
    for idx, c in enumerate(counts):
        if c:
            cum += c
            if cum >= need:
                return EDGES[idx]
    return EDGES[_LAST]


class LatencyHistogram:
    """Standalone histogram over the shared bucket layout."""

    __slots__ = ("counts", "n", "samples")

    def __init__(self, keep_samples: bool = False):
        self.counts = [0] * N_BUCKETS
        self.n = 0
        self.samples = [] if keep_samples else None

    def add(self, latency_ns: int):
        self.counts[bucket_of(latency_ns)] += 1
        self.n += 1
        if self.samples is not None:
            self.samples.append(latency_ns)

    def quantile(self, q: float):
        return quantile_from_counts(self.counts, self.n, q)

    def merge_into(self, other: "LatencyHistogram"):
        oc = other.counts
        for i, c in enumerate(self.counts):
            if c:
                oc[i] += c
        other.n += self.n

    def reset(self):
        self.counts = [0] * N_BUCKETS
        self.n = 0
        if self.samples is not None:
            self.samples = []


# ---------------------------------------------------------------------------
# Runtime per-tenant metrics
# ---------------------------------------------------------------------------


class TenantMetrics:
    """Interval + cumulative accounting for one tenant.

    The cumulative histogram only counts completions at or after the warmup
    boundary; it is the measurement the SLO verdict is judged on.  Full-run
    totals (count/bytes) are kept separately so interval rows can be checked
    to sum up exactly.

    record() runs once per completion, so it touches only the interval
    counters; cumulative and full-run tallies are folded in when the interval
    is flushed.  Only while an interval straddles the warmup boundary does
    record() classify each completion individually (`fold` False).
    """

    __slots__ = ("label", "lc", "slo_q", "warmup_ns", "fold",
                 "i_counts", "i_n", "i_bytes",
                 "c_counts", "c_n", "c_bytes",
                 "t_n", "t_bytes")

    def __init__(self, label: str, lc: bool, slo_q: float, warmup_ns: int):
        self.label = label
        self.lc = lc
        self.slo_q = slo_q
        self.warmup_ns = warmup_ns
        self.fold = warmup_ns == 0   # first interval starts at t=0
        self.i_counts = [0] * N_BUCKETS
        self.i_n = 0
        self.i_bytes = 0
        self.c_counts = [0] * N_BUCKETS
        self.c_n = 0
        self.c_bytes = 0
        self.t_n = 0
        self.t_bytes = 0

    def record(self, latency_ns: int, size: int, now: int) -> int:
        b = bisect_left(EDGES, latency_ns)
        if b >= N_BUCKETS:
            b = _LAST
        self.i_counts[b] += 1
        self.i_n += 1
        self.i_bytes += size
        if not self.fold and now >= self.warmup_ns:
            self.c_counts[b] += 1
            self.c_n += 1
            self.c_bytes += size
        return b

    def flush_interval(self, now: int):
        """Close the interval ending at `now`; returns its counts/n/bytes."""
        counts, n, nbytes = self.i_counts, self.i_n, self.i_bytes
        if self.fold:
            # Interval lay entirely past warmup: cumulative gets it wholesale.
            c = self.c_counts
            for i, v in enumerate(counts):
                if v:
                    c[i] += v
            self.c_n += n
            self.c_bytes += nbytes
        self.t_n += n
        self.t_bytes += nbytes
        self.i_counts = [0] * N_BUCKETS
        self.i_n = 0
        self.i_bytes = 0
        # The next interval starts at `now`.
        self.fold = now >= self.warmup_ns
        return counts, n, nbytes

    def cumulative_quantile(self, q: float):
        return quantile_from_counts(self.c_counts, self.c_n, q)


class _Area:
    """Time-weighted integral of a core count, for mean_cores per interval."""

    __slots__ = ("num", "last_t", "area")

    def __init__(self, num: int, t0: int = 0):
        self.num = num
        self.last_t = t0
        self.area = 0

    def change(self, new_num: int, now: int):
        self.area += self.num * (now - self.last_t)
        self.num = new_num
        self.last_t = now

    def take(self, now: int) -> int:
        """Integrate up to now, return and reset the accumulated area."""
        self.area += self.num * (now - self.last_t)
        self.last_t = now
        a = self.area
        self.area = 0
        return a


class MetricsHub:
    """Owns per-tenant metrics, interval rows, and the trace row buffers."""

    BE_POOL = "__be__"

    def __init__(self, run_id: str, interval_ns: int, warmup_ns: int):
        self.run_id = run_id
        self.interval_ns = interval_ns
        self.warmup_ns = warmup_ns
        self.tenants: dict[str, TenantMetrics] = {}
        self.areas: dict[str, _Area] = {}
        self.interval_rows: list[tuple] = []
        self.alloc_rows: list[tuple] = []
        self.window_rows: list[tuple] = []
        self.policy_rows: list[tuple] = []
        self.transfer_rows: list[tuple] = []
        self.estimator_rows: list[tuple] = []
        self._interval_idx = 0
        self._interval_start = 0
        self._be_labels: list[str] = []

    def register_tenant(self, label: str, lc: bool, slo_q: float) -> TenantMetrics:
        tm = TenantMetrics(label, lc, slo_q, self.warmup_ns)
        self.tenants[label] = tm
        self.areas[label] = _Area(0)
        if not lc:
            self._be_labels.append(label)
        return tm

    def init_be_pool(self, num: int):
        self.areas[self.BE_POOL] = _Area(num)

    def on_cores(self, label: str, new_num: int, now: int):
        self.areas[label].change(new_num, now)

    # -- traces ---------------------------------------------------------------

    def alloc_event(self, now: int, tenant: str, old: int, new: int, trigger: str):
        self.alloc_rows.append((now, tenant, old, new, trigger))

    def window_event(self, tenant: str, wid: int, ql: int, tw: int,
                     granted: int, policy: str):
        self.window_rows.append((tenant, wid, ql, tw, granted, policy))

    def policy_event(self, now: int, tenant: str, old: str, new: str, slack_ns: int):
        self.policy_rows.append((now, tenant, old, new, slack_ns))

    def transfer_event(self, core: int, from_owner: str, to_owner: str,
                       marked_ns: int, effective_ns: int, initiator: str):
        self.transfer_rows.append((core, from_owner, to_owner,
                                   marked_ns, effective_ns, initiator))

    def estimator_snapshot(self, now: int, tenant: str, mean_ns: float, tail_ns: int):
        self.estimator_rows.append((now, tenant, mean_ns, tail_ns))

    # -- interval machinery -----------------------------------------------------

    def flush_interval(self, now: int):
        """Close the interval ending at `now` and emit one row per tenant."""
        length = now - self._interval_start
        if length <= 0:
            return
        be_area = self.areas.get(self.BE_POOL)
        be_mean = (be_area.take(now) / length) if be_area is not None else None
        secs = length / SEC
        for label, tm in self.tenants.items():
            counts, n, nbytes = tm.flush_interval(now)
            if tm.lc:
                tail = quantile_from_counts(counts, n, tm.slo_q)
                mean_cores = self.areas[label].take(now) / length
            else:
                tail = None
                mean_cores = be_mean
            self.interval_rows.append((
                self.run_id, self._interval_idx, label,
                tail if tail is not None else "",
                repr(nbytes / secs),
                repr(mean_cores) if mean_cores is not None else "",
            ))
        self._interval_idx += 1
        self._interval_start = now

    def finalize(self, end_ns: int):
        if end_ns > self._interval_start:
            self.flush_interval(end_ns)

    # -- end-of-run reporting ------------------------------------------------

    def latency_rows(self, extra_quantiles=(0.5, 0.9, 0.99, 0.999)):
        rows = []
        for label, tm in self.tenants.items():
            qs = list(extra_quantiles)
            if tm.lc and tm.slo_q not in qs:
                qs.append(tm.slo_q)
            for q in sorted(qs):
                tail = tm.cumulative_quantile(q)
                rows.append((self.run_id, label, "lc" if tm.lc else "be",
                             q, tail if tail is not None else ""))
        return rows


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

LATENCY_HEADER = "run_id,tenant,class,quantile,cumulative_tail_ns"
INTERVALS_HEADER = "run_id,interval,tenant,tail_ns,bandwidth_bytes_per_s,mean_cores"
ALLOC_HEADER = "time_ns,tenant,old_num,new_num,trigger"
WINDOWS_HEADER = "tenant,wid,ql,tw_ns,granted_cores,policy"
POLICY_HEADER = "time_ns,tenant,old_policy,new_policy,slack_ns"
TRANSFERS_HEADER = "core,from_owner,to_owner,marked_ns,effective_ns,initiator"
ESTIMATORS_HEADER = "time_ns,tenant,t_io_avg_ns,tail_io_ns"


def _write_csv(path, header: str, rows):
    with open(path, "w") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(",".join(str(x) for x in row) + "\n")


def write_all(hub: MetricsHub, out_dir):
    """Write every CSV for one run into out_dir; returns {name: path}."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    def emit(name, header, rows):
        p = os.path.join(out_dir, name)
        _write_csv(p, header, rows)
        paths[name] = p

    emit("latency.csv", LATENCY_HEADER, hub.latency_rows())
    emit("intervals.csv", INTERVALS_HEADER, hub.interval_rows)
    emit("alloc_trace.csv", ALLOC_HEADER, hub.alloc_rows)
    emit("windows.csv", WINDOWS_HEADER, hub.window_rows)
    emit("policy_trace.csv", POLICY_HEADER, hub.policy_rows)
    emit("transfers.csv", TRANSFERS_HEADER, hub.transfer_rows)
    emit("estimators.csv", ESTIMATORS_HEADER, hub.estimator_rows)
    return paths
