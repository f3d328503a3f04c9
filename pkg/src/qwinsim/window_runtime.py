"""Request-based windows and the queue-drain core-count model.

A window captures the tenant's entire queue at establishment; requests that
arrive while it is active belong to the next window.  Windows partition the
arrival sequence: member ship is decided by per-tenant arrival index ranges
(boundary_lo..boundary_hi), which stays well-defined even when worker cores
dequeue past the boundary before the current window has fully completed.

From each window the allocator derives a core demand: the queue must drain
within the slack that remains after subtracting the device tail and the time
the window's first request has already waited, and by Little's law sustaining
that drain rate costs drain_rate * mean_service_time cores.
"""

from __future__ import annotations

import math


class Window:
    __slots__ = ("wid", "ql", "tw", "established_at",
                 "boundary_lo", "boundary_hi", "outstanding",
                 "remaining_dequeues", "is_temp", "granted")

    def __init__(self, wid, ql, tw, established_at, boundary_lo, boundary_hi,
                 outstanding, is_temp=False):
        self.wid = wid
        self.ql = ql
        self.tw = tw
        self.established_at = established_at
        self.boundary_lo = boundary_lo
        self.boundary_hi = boundary_hi
        self.outstanding = outstanding
        self.remaining_dequeues = ql
        self.is_temp = is_temp
        self.granted = 0

    @property
    def members(self) -> int:
        return self.boundary_hi - self.boundary_lo + 1

    def __repr__(self):
        kind = "tmp" if self.is_temp else "win"
        return (f"<{kind} {self.wid} ql={self.ql} tw={self.tw} "
                f"range=[{self.boundary_lo},{self.boundary_hi}] out={self.outstanding}>")


def new_window(tenant, now) -> Window:
    """Establish the tenant's next window over its current queue.

    The tenant must have a non-empty queue and no active window.  Updates the
    tenant's window bookkeeping (wid, wcnt, boundary high-water mark, and the
    count of next-window members that completed early).
    """
    queue = tenant.queue
    if not queue:
        raise ValueError(f"cannot establish a window for {tenant.label}: queue is empty")
    if tenant.win is not None:
        raise ValueError(f"{tenant.label} already has an active window")
    tenant.wid += 1
    tenant.wcnt = 0
    lo = tenant.prev_boundary + 1
    hi = tenant.arrivals
    # Members that were dequeued *and completed* before this window even got
    # established still belong to it; they are already done, so they must not
    # count as outstanding work.
    outstanding = (hi - lo + 1) - tenant.completed_gap
    tenant.completed_gap = 0
    tenant.prev_boundary = hi
    win = Window(tenant.wid, len(queue), now - queue[0].enqueued_at, now,
                 lo, hi, outstanding)
    tenant.win = win
    return win


def temp_window(tenant, now) -> Window | None:
    """Snapshot the current queue mid-window, for budget probes.

    Returns None when the queue is empty.  Temp windows carry no membership
    range and never touch the tenant's window bookkeeping.
    """
    queue = tenant.queue
    if not queue:
        return None
    return Window(tenant.wid, len(queue), now - queue[0].enqueued_at, now,
                  0, -1, 0, is_temp=True)


def calculate_cores(ql: int, tw_ns: int, slo_ns: int,
                    tail_io_ns: int, t_io_avg_ns: float, pool_total: int) -> int:
    """Cores needed to drain ql requests inside the remaining slack.

    slack = slo - device_tail - time_already_waited.  Non-positive slack means
    the SLO is already at risk: demand the whole pool.  Otherwise demand
    ceil(drain_rate * mean_service), clamped to [1, pool_total].
    """
    slack = slo_ns - tail_io_ns - tw_ns
    if slack <= 0:
        return pool_total
    n = math.ceil(ql * t_io_avg_ns / slack)
    if n < 1:
        return 1
    if n > pool_total:
        return pool_total
    return n


def demand_for(win: Window, slo_ns: int, tail_io_ns: int,
               t_io_avg_ns: float, pool_total: int) -> int:
    return calculate_cores(win.ql, win.tw, slo_ns, tail_io_ns, t_io_avg_ns, pool_total)
