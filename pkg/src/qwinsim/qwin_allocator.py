"""SLO-aware adaptive core allocation driven by request windows.

Each LC worker core runs the same iteration: establish a window over the
queue if none is active (refreshing the core policy every policy_window
windows and resizing to the window's demand), serve one request FIFO, and --
depending on the policy's probe budget -- snapshot the queue mid-window to
catch load spikes early.  Mid-window probes only ever grow the allocation;
shrinking happens at window establishment or through voluntary yields when a
core finds nothing left to do.

Policies:
  conservative  never probes mid-window (budget 0); cheapest, slowest to react
  aggressive    probes after every dequeue (budget 1); fastest, steals the most
  slo_aware     probes every budget-th dequeue, where the budget is how many
                mean service times fit in the window's remaining slack

The active policy is re-picked every policy_window windows from the measured
latency slack: lots of slack -> conservative, scarce slack -> aggressive,
in between -> slo_aware.  A tenant starts aggressive until measurements
accumulate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .metrics import quantile_from_counts
from .sim_core import US
from .window_runtime import calculate_cores, new_window

_ceil = math.ceil

CONSERVATIVE = "conservative"
AGGRESSIVE = "aggressive"
SLO_AWARE = "slo_aware"
POLICIES = (CONSERVATIVE, AGGRESSIVE, SLO_AWARE)


@dataclass(frozen=True)
class PolicyParams:
    policy_window: int = 2000          # windows between policy refreshes
    slack_low_ns: int = 300 * US       # below: aggressive
    slack_high_ns: int = 1000 * US     # above: conservative
    min_tail_samples: int = 1000       # fewer since last refresh: keep policy
    pin: str | None = None             # force one policy for the whole run

    def validate(self):
        if self.policy_window < 1:
            raise ValueError("policy_window must be >= 1")
        if self.slack_low_ns > self.slack_high_ns:
            raise ValueError("slack_low_ns must be <= slack_high_ns")
        if self.min_tail_samples < 1:
            raise ValueError("min_tail_samples must be >= 1")
        if self.pin is not None and self.pin not in POLICIES:
            raise ValueError(f"pin must be one of {POLICIES}")


def select_policy(slack_ns: int, params: PolicyParams) -> str:
    """Pure slack -> policy mapping."""
    if slack_ns > params.slack_high_ns:
        return CONSERVATIVE
    if slack_ns < params.slack_low_ns:
        return AGGRESSIVE
    return SLO_AWARE


def compute_budget(slo_ns: int, tail_io_ns: int, tw_ns: int, t_io_avg_ns: float) -> int:
    """How many dequeues fit between probes under the slo_aware policy.

    floor(remaining slack / mean service time), at least 1.  A non-positive
    slack leaves no room for complacency: probe every dequeue.
    """
    slack = slo_ns - tail_io_ns - tw_ns
    if slack <= 0:
        return 1
    b = math.floor(slack / t_io_avg_ns)
    return b if b >= 1 else 1


class QwinAllocator:
    """Per-LC-core adaptive allocation (window demand + probes + policy)."""

    name = "qwin"
    per_tenant_cores = True

    def __init__(self, params: PolicyParams | None = None):
        self.params = params or PolicyParams()
        self.params.validate()
        self.backend = None
        self.hub = None
        self.pool = 0

    # -- wiring ------------------------------------------------------------

    def setup(self, backend):
        self.backend = backend
        self.hub = backend.hub
        self.pool = backend.pool_total
        pin = self.params.pin
        for i, t in enumerate(backend.lc_tenants):
            if i >= backend.pool_total:
                raise ValueError("more LC tenants than cores in the pool")
            backend.assign_core(backend.cores[i], t)
            t.policy = pin if pin is not None else t.policy
            t.budget = self._budget_for_policy(t, None)

    # -- policy ----------------------------------------------------------------

    def _refresh_policy(self, t, now):
        """Re-pick the policy from measured latency slack (every policy_window windows)."""
        if self.params.pin is not None:
            return
        if t.probe_n < self.params.min_tail_samples:
            return  # not enough evidence; keep the current policy
        measured = quantile_from_counts(t.probe_counts, t.probe_n, t.slo_q)
        t.reset_probe_hist()
        slack = t.slo_ns - measured
        new = select_policy(slack, self.params)
        if new != t.policy:
            self.hub.policy_event(now, t.label, t.policy, new, slack)
            t.policy = new

    def _budget_for_policy(self, t, win):
        policy = t.policy
        if policy == CONSERVATIVE:
            return 0
        if policy == AGGRESSIVE:
            return 1
        est = t.estimator
        tw = win.tw if win is not None else 0
        return compute_budget(t.slo_ns, est.tail_ns, tw, est.mean_ns)

    # -- Algorithm: one LC core iteration ------------------------------------------

    def lc_step(self, core, t, now):
        queue = t.queue
        if t.win is None and queue:
            win = new_window(t, now)
            t.windows_established += 1
            if t.wid % self.params.policy_window == 0:
                self._refresh_policy(t, now)
            t.budget = self._budget_for_policy(t, win)
            est = t.estimator
            demand = calculate_cores(win.ql, win.tw, t.slo_ns,
                                     est.tail_ns, est.mean_ns, self.pool)
            self.adjust_cores(t, demand, now, "window_start")
            win.granted = t.num
            self.hub.window_event(t.label, win.wid, win.ql, win.tw, t.num, t.policy)
        if queue:
            req = queue.popleft()
            t.wcnt += 1
            win = t.win
            if win is not None:
                if not t.end_on_complete and req.seq <= win.boundary_hi:
                    win.remaining_dequeues -= 1
                    if win.remaining_dequeues == 0:
                        t.win = None
                budget = t.budget
                if budget and t.wcnt % budget == 0 and t.win is not None:
                    t.probes_attempted += 1
                    # A probe only ever scales up, so with every pool core
                    # already owned there is nothing to compute.
                    if queue and t.num < self.pool:
                        # Temp window over the live queue (the core-demand
                        # formula, inlined: this runs per dequeue under a
                        # budget-1 policy).
                        est = t.estimator
                        slack = t.slo_ns - est.tail_ns - (now - queue[0].enqueued_at)
                        if slack <= 0:
                            tmp = self.pool
                        else:
                            tmp = _ceil(len(queue) * est.mean_ns / slack)
                            if tmp > self.pool:
                                tmp = self.pool
                        if tmp > t.num:
                            self.adjust_cores(t, tmp, now, "probe")
            return req
        if t.win is None and t.num > 1:
            # Nothing queued and no window pending: this core is surplus.
            self.backend.yield_core(core, t, now)
        return None

    # -- Algorithm: resize to target ----------------------------------------------

    def adjust_cores(self, t, target: int, now, origin: str) -> int:
        """Resize tenant's allocation toward target; returns the new num.

        Shrinks release to the BE pool immediately (idle victims first, the
        executing core never).  Grows take BE cores: parked ones right away,
        busy ones marked to transfer as their in-flight request completes.
        A grow capped by pool availability is traced as a shortfall.
        """
        num = t.num
        if target > num:
            want = target - num
            got = self.backend.grant_cores(t, want, now, t.label)
            if got:
                trigger = origin if got == want else "shortfall"
                self.hub.alloc_event(now, t.label, num, num + got, trigger)
            return t.num
        if target < num:
            self.backend.release_cores(t, num - target, now, t.label)
            self.hub.alloc_event(now, t.label, num, target, origin)
        return t.num
