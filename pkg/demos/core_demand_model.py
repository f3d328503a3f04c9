"""The queue-drain core model, visualized as tables.

calculate_cores answers: how many cores must drain `ql` queued requests
before the latency budget runs out?  The budget (slack) is the SLO minus the
measured device tail minus the time the head of the queue already waited.
Little's law turns the required drain rate into cores:

    cores = ceil(ql * t_io_avg / slack),  clamped to [1, pool]

compute_budget answers: under the slack-aware policy, how many dequeues may
pass between re-checks of the demand?  A tight slack probes every dequeue.
"""

import numpy as np

from qwinsim import calculate_cores, compute_budget

SLO = 4_000_000          # 4 ms tail objective
TAIL = 260_000           # measured device p99.9 (ns)
AVG = 106_600.0          # measured mean service time (ns)
POOL = 8

print(f"SLO {SLO / 1e6:g}ms, device tail {TAIL / 1e3:g}us, "
      f"mean service {AVG / 1e3:g}us, pool of {POOL} cores\n")

print("cores demanded vs queue length and head wait (tw):")
waits = np.array([0, 1_000_000, 2_000_000, 3_000_000, 3_600_000])
queues = np.array([1, 8, 32, 64, 128, 320, 1000])
header = "  ql \\ tw | " + " | ".join(f"{w / 1e6:6.1f}ms" for w in waits)
print(header)
print("  " + "-" * (len(header) - 2))
for ql in queues:
    cells = []
    for tw in waits:
        cores = calculate_cores(int(ql), int(tw), SLO, TAIL, AVG, POOL)
        slack = SLO - TAIL - int(tw)
        cells.append(f"{cores:5d}{'*' if slack <= 0 else ' '}")
    print(f"  {ql:7d} | " + " | ".join(f"{c:>8s}" for c in cells))
print("  (* slack exhausted: the whole pool is demanded)\n")

print("probe budget (dequeues between demand re-checks) vs measured tail:")
for tail in (500_000, 1_000_000, 2_000_000, 3_000_000, 3_800_000, 4_200_000):
    b = compute_budget(SLO, tail, 0, AVG)
    slack = SLO - tail
    note = "probe every dequeue" if b == 1 else f"re-check every {b} dequeues"
    print(f"  tail {tail / 1e6:4.1f}ms -> slack {slack / 1e6:5.2f}ms -> {note}")

print("\nThe tighter the slack, the denser the probing and the larger the")
print("demanded share of the pool; with slack gone, demand saturates at the")
print("pool size and probing happens on every single dequeue.")
