"""Latency histograms, interval/cumulative accounting, CSV layouts."""

import math
import random

import pytest

from qwinsim import LatencyHistogram, MetricsHub, TenantMetrics, quantile_from_counts
from qwinsim.metrics import (ALLOC_HEADER, EDGES, ESTIMATORS_HEADER,
                             INTERVALS_HEADER, LATENCY_HEADER, N_BUCKETS,
                             POLICY_HEADER, TRANSFERS_HEADER, WINDOWS_HEADER,
                             bucket_edge, bucket_of, write_all)


# ---------------------------------------------------------------------------
# Buckets and quantiles
# ---------------------------------------------------------------------------


def test_edges_are_strictly_increasing_and_cover_range():
    assert EDGES[0] == 1_000
    assert EDGES[-1] >= 10_000_000_000
    assert all(a < b for a, b in zip(EDGES, EDGES[1:]))
    # ~5% geometric growth
    for a, b in list(zip(EDGES, EDGES[1:]))[::500]:
        assert 1.03 < b / a < 1.07 or a < 2_000


def test_bucket_of_respects_edges():
    for v in (1, 1_000, 1_001, 123_456, 10_000_000_000, 1 << 45):
        b = bucket_of(v)
        assert v <= bucket_edge(b) or b == N_BUCKETS - 1
        if b > 0:
            assert v > bucket_edge(b - 1) or b == N_BUCKETS - 1


def test_quantile_from_counts_known_small_case():
    counts = [0] * N_BUCKETS
    # ten samples: 9 in bucket of 100us, 1 in bucket of 10ms
    b_lo, b_hi = bucket_of(100_000), bucket_of(10_000_000)
    counts[b_lo] = 9
    counts[b_hi] = 1
    assert quantile_from_counts(counts, 10, 0.5) == bucket_edge(b_lo)
    assert quantile_from_counts(counts, 10, 0.9) == bucket_edge(b_lo)
    # ceil(0.91 * 10) = 10th sample -> the spike bucket
    assert quantile_from_counts(counts, 10, 0.91) == bucket_edge(b_hi)
    assert quantile_from_counts(counts, 10, 1.0) == bucket_edge(b_hi)
    assert quantile_from_counts(counts, 0, 0.9) is None


def test_quantile_exact_multiple_has_no_float_dust():
    counts = [0] * N_BUCKETS
    counts[bucket_of(1_000)] = 900
    counts[bucket_of(50_000)] = 100
    # 0.9 * 1000 = 900 exactly -> the 900th sample, still the low bucket
    assert quantile_from_counts(counts, 1000, 0.9) == bucket_edge(bucket_of(1_000))


def test_histogram_within_one_bucket_of_exact_quantile():
    rng = random.Random(55)
    h = LatencyHistogram(keep_samples=True)
    for _ in range(30_000):
        x = int(rng.lognormvariate(math.log(200_000), 0.5))
        if rng.random() < 0.002:
            x *= 25
        h.add(x)
    xs = sorted(h.samples)
    for q in (0.9, 0.99, 0.999):
        exact = xs[math.ceil(q * len(xs)) - 1]
        b = bucket_of(exact)
        width = bucket_edge(b) - (bucket_edge(b - 1) if b else 0)
        assert abs(h.quantile(q) - exact) <= width


def test_histogram_merge_and_reset():
    a, b = LatencyHistogram(), LatencyHistogram()
    for v in (1_000, 2_000, 3_000):
        a.add(v)
    b.add(9_000)
    a.merge_into(b)
    assert b.n == 4
    assert b.quantile(1.0) == bucket_edge(bucket_of(9_000))
    a.reset()
    assert a.n == 0 and a.quantile(0.5) is None


# ---------------------------------------------------------------------------
# TenantMetrics: warmup and interval folding
# ---------------------------------------------------------------------------


def test_cumulative_counts_only_post_warmup():
    tm = TenantMetrics("lc0", True, 0.999, warmup_ns=1_000)
    tm.record(10_000, 4096, now=500)      # pre-warmup
    tm.record(10_000, 4096, now=999)      # pre-warmup
    tm.record(20_000, 4096, now=1_000)    # at the boundary: counts
    tm.record(20_000, 4096, now=1_500)
    tm.flush_interval(2_000)
    assert tm.c_n == 2
    assert tm.t_n == 4                     # totals see everything
    assert tm.cumulative_quantile(1.0) == bucket_edge(bucket_of(20_000))


def test_interval_totals_sum_to_run_totals():
    tm = TenantMetrics("lc0", True, 0.999, warmup_ns=2_500)
    rng = random.Random(2)
    now = 0
    per_interval = []
    for k in range(5):
        n = rng.randrange(3, 30)
        for _ in range(n):
            now += 7
            tm.record(rng.randrange(1_000, 1_000_000), 4096, now)
        _, i_n, i_bytes = tm.flush_interval((k + 1) * 1_000)
        per_interval.append((i_n, i_bytes))
        now = (k + 1) * 1_000
    assert sum(n for n, _ in per_interval) == tm.t_n
    assert sum(b for _, b in per_interval) == tm.t_bytes
    # cumulative only saw intervals at/after the warmup boundary
    assert tm.c_n <= tm.t_n


def test_fold_flag_toggles_at_warmup_and_totals_stay_exact():
    # warmup at 1500 cuts the second interval [1000, 2000) in half
    tm = TenantMetrics("lc0", True, 0.999, warmup_ns=1_500)
    assert tm.fold is False
    tm.record(5_000, 100, now=200)
    tm.flush_interval(1_000)
    assert tm.fold is False                # interval [1000,2000) straddles
    tm.record(5_000, 100, now=1_400)       # pre-warmup: cumulative skips it
    tm.record(5_000, 100, now=1_600)       # post-warmup: cumulative takes it
    tm.flush_interval(2_000)
    assert tm.fold is True                 # intervals now fully post-warmup
    tm.record(5_000, 100, now=2_700)
    tm.flush_interval(3_000)
    assert tm.c_n == 2 and tm.t_n == 4
    assert tm.c_bytes == 200 and tm.t_bytes == 400


def test_zero_warmup_folds_from_the_start():
    tm = TenantMetrics("lc0", True, 0.999, warmup_ns=0)
    assert tm.fold is True
    tm.record(5_000, 50, now=1)
    tm.flush_interval(1_000)
    assert tm.c_n == 1 and tm.t_n == 1


# ---------------------------------------------------------------------------
# MetricsHub rows and CSV files
# ---------------------------------------------------------------------------


def _mini_hub():
    hub = MetricsHub("run-x", interval_ns=1_000, warmup_ns=0)
    hub.register_tenant("lc0", True, 0.999)
    hub.register_tenant("be0", False, 0.999)
    hub.init_be_pool(7)
    hub.on_cores("lc0", 1, 0)
    return hub


def test_interval_rows_shape_and_be_pool_mean():
    hub = _mini_hub()
    hub.tenants["lc0"].record(40_000, 4096, 100)
    hub.tenants["be0"].record(90_000, 65536, 200)
    hub.flush_interval(1_000)
    rows = hub.interval_rows
    assert len(rows) == 2
    lc_row = next(r for r in rows if r[2] == "lc0")
    be_row = next(r for r in rows if r[2] == "be0")
    assert lc_row[0] == "run-x" and lc_row[1] == 0
    assert lc_row[3] == bucket_edge(bucket_of(40_000))
    assert float(lc_row[4]) == pytest.approx(4096 / 1e-6)   # bytes over 1us-long... 1000ns
    assert be_row[3] == ""                                   # BE has no tail column
    assert float(be_row[5]) == pytest.approx(7.0)            # pool-wide mean cores
    assert float(lc_row[5]) == pytest.approx(1.0)


def test_alloc_window_policy_transfer_estimator_rows():
    hub = _mini_hub()
    hub.alloc_event(500, "lc0", 1, 3, "window_start")
    hub.window_event("lc0", 1, 12, 2_000, 3, "slo_aware")
    hub.policy_event(700, "lc0", "aggressive", "slo_aware", 450_000)
    hub.transfer_event(4, "__be__", "lc0", 500, 750, "lc0")
    hub.estimator_snapshot(1_000, "lc0", 105_333.5, 260_000)
    assert hub.alloc_rows == [(500, "lc0", 1, 3, "window_start")]
    assert hub.window_rows == [("lc0", 1, 12, 2_000, 3, "slo_aware")]
    assert hub.policy_rows == [(700, "lc0", "aggressive", "slo_aware", 450_000)]
    assert hub.transfer_rows == [(4, "__be__", "lc0", 500, 750, "lc0")]
    assert hub.estimator_rows == [(1_000, "lc0", 105_333.5, 260_000)]


def test_headers_are_pinned():
    assert LATENCY_HEADER == "run_id,tenant,class,quantile,cumulative_tail_ns"
    assert INTERVALS_HEADER == "run_id,interval,tenant,tail_ns,bandwidth_bytes_per_s,mean_cores"
    assert ALLOC_HEADER == "time_ns,tenant,old_num,new_num,trigger"
    assert WINDOWS_HEADER == "tenant,wid,ql,tw_ns,granted_cores,policy"
    assert POLICY_HEADER == "time_ns,tenant,old_policy,new_policy,slack_ns"
    assert TRANSFERS_HEADER == "core,from_owner,to_owner,marked_ns,effective_ns,initiator"
    assert ESTIMATORS_HEADER == "time_ns,tenant,t_io_avg_ns,tail_io_ns"


def test_write_all_emits_seven_csvs_with_headers(tmp_path):
    hub = _mini_hub()
    hub.tenants["lc0"].record(40_000, 4096, 100)
    hub.finalize(1_000)
    paths = write_all(hub, tmp_path / "run")
    assert sorted(paths) == ["alloc_trace.csv", "estimators.csv", "intervals.csv",
                             "latency.csv", "policy_trace.csv", "transfers.csv",
                             "windows.csv"]
    for name, p in paths.items():
        first = open(p).readline().rstrip("\n")
        assert "," in first and first[0].isalpha() or first.startswith("time_ns")
    lat = open(paths["latency.csv"]).read().splitlines()
    assert lat[0] == LATENCY_HEADER
    # lc0 rows at the standard quantiles (slo_q 0.999 already included)
    lc_rows = [l for l in lat[1:] if l.split(",")[1] == "lc0"]
    assert [r.split(",")[3] for r in lc_rows] == ["0.5", "0.9", "0.99", "0.999"]


def test_latency_rows_add_slo_quantile_when_nonstandard():
    hub = MetricsHub("run-y", interval_ns=1_000, warmup_ns=0)
    hub.register_tenant("lc0", True, 0.95)
    hub.tenants["lc0"].record(40_000, 4096, 100)
    hub.finalize(1_000)
    rows = hub.latency_rows()
    qs = [r[3] for r in rows]
    assert qs == sorted(qs)
    assert 0.95 in qs and 0.999 in qs


def test_mean_cores_is_time_weighted():
    hub = MetricsHub("run-z", interval_ns=1_000, warmup_ns=0)
    hub.register_tenant("lc0", True, 0.999)
    hub.init_be_pool(8)
    hub.on_cores("lc0", 0, 0)
    hub.on_cores("lc0", 4, 250)    # 0 cores for 250ns, then 4 for 750ns
    hub.tenants["lc0"].record(1_000, 1, 10)
    hub.flush_interval(1_000)
    row = hub.interval_rows[0]
    assert float(row[5]) == pytest.approx((0 * 250 + 4 * 750) / 1_000)
