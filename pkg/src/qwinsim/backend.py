"""The simulated storage backend: tenant queues, worker cores, completion plumbing.

Core ownership model: every core is owned either by one LC tenant or by the
shared BE pool.  Ownership flips are pure accounting and take effect
immediately; a core that is mid-request simply finishes that request first
and only then starts serving its new owner (the completion event is the
natural handoff point).  LC-owned cores are never taken by another tenant's
demand -- they move only when their own tenant shrinks or yields.

The complete-io handler is the simulator's hot path; it is written flat on
purpose and every sub-structure it touches is O(1).
"""

from __future__ import annotations

from bisect import insort
from collections import deque

from .metrics import N_BUCKETS
from .sim_core import EventKind

BE = None  # owner sentinel for the shared best-effort pool
BE_LABEL = "be"

INIT_POLICY = "aggressive"  # newly registered LC tenants start aggressive


class Core:
    __slots__ = ("cid", "owner", "busy", "pending_marks")

    def __init__(self, cid):
        self.cid = cid
        self.owner = BE
        self.busy = None          # Request currently being served
        self.pending_marks = None  # [(from_label, to_label, marked_ns, initiator)]

    def __repr__(self):
        who = self.owner.label if self.owner is not None else BE_LABEL
        return f"<core {self.cid} owner={who} busy={self.busy is not None}>"


class Tenant:
    """Per-tenant state: queue, window bookkeeping, allocation fields."""

    __slots__ = ("label", "lc", "slo_q", "slo_ns", "queue", "source",
                 "arrivals", "dequeues", "prev_boundary", "completed_gap",
                 "win", "wid", "wcnt", "budget", "policy", "num",
                 "estimator", "metrics", "idle",
                 "probe_counts", "probe_n", "probes_attempted",
                 "end_on_complete", "windows_established", "last_head_seq")

    def __init__(self, label, lc, slo_q=0.999, slo_ns=0, end_on_complete=True):
        self.label = label
        self.lc = lc
        self.slo_q = slo_q
        self.slo_ns = slo_ns
        self.queue = deque()
        self.source = None
        self.arrivals = 0
        self.dequeues = 0
        self.prev_boundary = 0
        self.completed_gap = 0
        self.win = None
        self.wid = 0
        self.wcnt = 0
        self.budget = 1
        self.policy = INIT_POLICY
        self.num = 0
        self.estimator = None
        self.metrics = None
        self.idle = []            # sorted cids of this tenant's parked cores
        self.probe_counts = [0] * N_BUCKETS   # latency buckets since last policy refresh
        self.probe_n = 0
        self.probes_attempted = 0
        self.end_on_complete = end_on_complete
        self.windows_established = 0
        self.last_head_seq = -1   # congestion-probe baseline state

    def reset_probe_hist(self):
        self.probe_counts = [0] * N_BUCKETS
        self.probe_n = 0

    def __repr__(self):
        kind = "lc" if self.lc else "be"
        return f"<tenant {self.label} {kind} num={self.num} q={len(self.queue)}>"


class Backend:
    """Wires tenants, cores, and the device together around one engine."""

    def __init__(self, engine, device, pool_total: int, hub,
                 window_end: str = "complete"):
        if pool_total < 1:
            raise ValueError("pool_total must be >= 1")
        if window_end not in ("complete", "dequeue"):
            raise ValueError("window_end must be 'complete' or 'dequeue'")
        self.engine = engine
        self.device = device
        self.hub = hub
        self.pool_total = pool_total
        self.window_end = window_end
        self.cores = [Core(i) for i in range(pool_total)]
        self.tenants: list[Tenant] = []
        self.lc_tenants: list[Tenant] = []
        self.be_tenants: list[Tenant] = []
        self.by_label: dict[str, Tenant] = {}
        self.be_idle: list[int] = list(range(pool_total))
        self.be_count = pool_total   # cores owned by the BE pool
        self._be_rr = 0
        self._lc_rr = 0
        self.pool_serves_lc = False  # fully-shared priority mode
        self.allocator = None
        self.completed = 0
        device.on_complete_fn = self._on_io_complete

    # -- construction -------------------------------------------------------

    def add_tenant(self, tenant: Tenant, source, estimator=None):
        tenant.source = source
        # Requests must carry the Tenant object so the completion handler can
        # reach queue/window/metrics state without a dict lookup.
        source.tenant = tenant
        tenant.estimator = estimator
        tenant.end_on_complete = self.window_end == "complete"
        self.tenants.append(tenant)
        self.by_label[tenant.label] = tenant
        if tenant.lc:
            self.lc_tenants.append(tenant)
        else:
            self.be_tenants.append(tenant)
        if self.hub is not None:
            tenant.metrics = self.hub.register_tenant(
                tenant.label, tenant.lc, tenant.slo_q)
        return tenant

    def assign_core(self, core: Core, tenant: Tenant | None):
        """Initial (pre-run) core assignment; no trace rows, no handoff."""
        if core.owner is tenant:
            return
        if core.owner is BE:
            self.be_idle.remove(core.cid)
            self.be_count -= 1
        else:
            core.owner.idle.remove(core.cid)
            core.owner.num -= 1
        core.owner = tenant
        if tenant is BE:
            insort(self.be_idle, core.cid)
            self.be_count += 1
        else:
            insort(tenant.idle, core.cid)
            tenant.num += 1

    def start(self, tracked_start=True):
        """Publish initial core counts and kick every core at t=0."""
        hub = self.hub
        if hub is not None:
            for t in self.tenants:
                hub.on_cores(t.label, t.num, 0)
            hub.init_be_pool(self.be_count)
        for t in self.tenants:
            t.source.start(self.engine, self._make_enqueue(t))
        for core in self.cores:
            self.engine.schedule(0, EventKind.CORE_WAKE, self._core_wake, core)

    def _core_wake(self, core, now):
        # A parked core is woken through here; it may have been re-parked or
        # put to work since the wake was scheduled, in which case do nothing.
        if core.busy is None:
            self._unpark(core)
            self.core_step(core, now)

    def _unpark(self, core):
        owner = core.owner
        lst = self.be_idle if owner is BE else owner.idle
        try:
            lst.remove(core.cid)
        except ValueError:
            pass

    # -- enqueue side ---------------------------------------------------------

    def _make_enqueue(self, tenant):
        def enqueue(req, now, _t=tenant):
            self.enqueue(_t, req, now)
        return enqueue

    def enqueue(self, tenant, req, now):
        req.enqueued_at = now
        tenant.arrivals += 1
        req.seq = tenant.arrivals
        tenant.queue.append(req)
        # Wake one parked core that is allowed to serve this tenant.
        if tenant.lc and not self.pool_serves_lc:
            idle = tenant.idle
            if idle:
                core = self.cores[idle.pop(0)]
                self.core_step(core, now)
        else:
            idle = self.be_idle
            if idle:
                core = self.cores[idle.pop(0)]
                self.core_step(core, now)

    # -- dispatch ------------------------------------------------------------

    def core_step(self, core, now):
        """Give an un-parked, not-busy core its next piece of work."""
        while True:
            owner = core.owner
            if owner is BE:
                req, t = self._be_dequeue()
                if req is None:
                    insort(self.be_idle, core.cid)
                    return
                break
            req = self.allocator.lc_step(core, owner, now)
            if req is not None:
                t = owner
                break
            if core.owner is not owner:
                continue  # the step yielded this core to the BE pool
            insort(owner.idle, core.cid)
            return
        # Serve: hand the dequeued request to the device (inline: hot path).
        t.dequeues += 1
        core.busy = req
        req.core = core
        req.dequeued_at = now
        dev = self.device
        if dev.in_service < dev.capacity:
            dev._start(req, now)
        else:
            dev.fifo.append(req)

    def plain_dequeue(self, tenant, now):
        """FIFO dequeue with window bookkeeping skipped (baseline allocators)."""
        queue = tenant.queue
        if not queue:
            return None
        return queue.popleft()

    def _be_dequeue(self):
        # Strict-priority shared pool: LC queues first, round-robin among
        # tenants of each class.
        if self.pool_serves_lc:
            lcs = self.lc_tenants
            n = len(lcs)
            if n:
                start = self._lc_rr
                for k in range(n):
                    t = lcs[(start + k) % n]
                    if t.queue:
                        self._lc_rr = (start + k + 1) % n
                        return t.queue.popleft(), t
        bes = self.be_tenants
        n = len(bes)
        if n:
            start = self._be_rr
            for k in range(n):
                t = bes[(start + k) % n]
                if t.queue:
                    self._be_rr = (start + k + 1) % n
                    return t.queue.popleft(), t
        return None, None

    # -- completion side (hot) -------------------------------------------------

    def _on_io_complete(self, req, now):
        # Free the device slot first so the core (or the device FIFO) can
        # overlap the next request with everything below.
        dev = self.device
        dev.in_service -= 1
        if dev.fifo:
            dev._start(dev.fifo.popleft(), now)
        core = req.core
        t = req.tenant
        req.completed_at = now
        b = t.metrics.record(now - req.arrive_at, req.size, now)
        if t.lc:
            est = t.estimator
            if est is not None:
                est.update(now - req.dequeued_at)
            t.probe_counts[b] += 1
            t.probe_n += 1
            win = t.win
            seq = req.seq
            if seq > (win.boundary_hi if win is not None else t.prev_boundary):
                t.completed_gap += 1
            elif win is not None and seq >= win.boundary_lo:
                win.outstanding -= 1
                if win.outstanding == 0 and t.end_on_complete:
                    t.win = None
        self.completed += 1
        repl = t.source.on_completion(req, now)
        if repl is not None:
            # Inline of enqueue() for the closed-loop replacement: the
            # completing core re-dispatches right below, so only stamp and
            # append here; wake another core only if one is actually parked.
            repl.enqueued_at = now
            t.arrivals += 1
            repl.seq = t.arrivals
            t.queue.append(repl)
            idle = t.idle if (t.lc and not self.pool_serves_lc) else self.be_idle
            if idle:
                other = self.cores[idle.pop(0)]
                self.core_step(other, now)
        core.busy = None
        if core.pending_marks is not None:
            for from_l, to_l, marked, initiator in core.pending_marks:
                self.hub.transfer_event(core.cid, from_l, to_l, marked, now, initiator)
            core.pending_marks = None
        self.core_step(core, now)

    # -- ownership transfers -----------------------------------------------------

    def _owner_label(self, owner):
        return BE_LABEL if owner is BE else owner.label

    def _flip(self, core, new_owner, now, initiator):
        """Move a core between owners; busy cores hand off at completion."""
        old = core.owner
        core.owner = new_owner
        row = (self._owner_label(old), self._owner_label(new_owner), now, initiator)
        if core.busy is not None:
            # Accounting changes now; the physical handoff happens when the
            # in-flight request completes.
            if core.pending_marks is None:
                core.pending_marks = [row]
            else:
                core.pending_marks.append(row)
        else:
            self.hub.transfer_event(core.cid, row[0], row[1], now, now, initiator)

    def grant_cores(self, tenant, want: int, now: int, initiator: str) -> int:
        """Move up to `want` BE-pool cores to an LC tenant; returns the grant."""
        grant = want if want <= self.be_count else self.be_count
        if grant <= 0:
            return 0
        took = 0
        wake = []
        idle = self.be_idle
        while took < grant and idle:
            core = self.cores[idle.pop(0)]
            self._flip(core, tenant, now, initiator)
            wake.append(core)
            took += 1
        if took < grant:
            # Mark busy BE cores, soonest completion first.
            busy = [c for c in self.cores
                    if c.owner is BE and c.busy is not None]
            busy.sort(key=lambda c: (c.busy.finish_at, c.cid))
            for core in busy[:grant - took]:
                self._flip(core, tenant, now, initiator)
                took += 1
        self.be_count -= took
        tenant.num += took
        hub = self.hub
        hub.on_cores(tenant.label, tenant.num, now)
        hub.areas[hub.BE_POOL].change(self.be_count, now)
        # Granted idle cores go to work for their new owner immediately.
        for core in wake:
            self.core_step(core, now)
        return took

    def release_cores(self, tenant, count: int, now: int, initiator: str) -> int:
        """Return `count` of tenant's cores to the BE pool (idle first)."""
        released = 0
        redispatch = []
        idle = tenant.idle
        while released < count and idle:
            core = self.cores[idle.pop(0)]
            self._flip(core, BE, now, initiator)
            redispatch.append(core)
            released += 1
        if released < count:
            busy = [c for c in self.cores
                    if c.owner is tenant and c.busy is not None]
            busy.sort(key=lambda c: (c.busy.finish_at, c.cid))
            for core in busy[:count - released]:
                self._flip(core, BE, now, initiator)
                released += 1
        tenant.num -= released
        self.be_count += released
        hub = self.hub
        hub.on_cores(tenant.label, tenant.num, now)
        hub.areas[hub.BE_POOL].change(self.be_count, now)
        for core in redispatch:
            self.core_step(core, now)
        return released

    def yield_core(self, core, tenant, now):
        """Voluntary single-core yield by the core's own tenant (hot-ish)."""
        old = tenant.num
        tenant.num = old - 1
        core.owner = BE
        self.be_count += 1
        hub = self.hub
        hub.transfer_event(core.cid, tenant.label, BE_LABEL, now, now, tenant.label)
        hub.alloc_event(now, tenant.label, old, old - 1, "yield")
        hub.on_cores(tenant.label, tenant.num, now)
        hub.areas[hub.BE_POOL].change(self.be_count, now)

    # -- invariants (used by tests and --validate paths) -------------------------

    def check_invariants(self):
        owned = sum(t.num for t in self.tenants if t.lc)
        assert owned + self.be_count == self.pool_total, \
            f"core conservation broken: {owned} LC + {self.be_count} BE != {self.pool_total}"
        for t in self.lc_tenants:
            if self.allocator is not None and self.allocator.per_tenant_cores:
                assert t.num >= 1, f"{t.label} dropped below 1 core"
        by_owner = {}
        for c in self.cores:
            by_owner[id(c.owner)] = by_owner.get(id(c.owner), 0) + 1
        for t in self.lc_tenants:
            if self.allocator is not None and self.allocator.per_tenant_cores:
                assert by_owner.get(id(t), 0) == t.num, \
                    f"{t.label}.num={t.num} but owns {by_owner.get(id(t), 0)} cores"
        assert by_owner.get(id(BE), 0) == self.be_count
        for t in self.tenants:
            src = t.source
            if src is not None and src.spec.mode == "closed_loop":
                assert src.in_flight <= src.spec.in_flight_cap
