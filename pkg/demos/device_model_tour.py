"""Tour of the stochastic device model and its online estimators.

Service times are lognormal around a size-scaled median, with a small
probability of a latency spike (multiplier on the sampled value).  The
analytic helpers predict the mean and any quantile of that mixture; the
online estimators (EWMA mean, sliding-window tail histogram) recover both
from observed samples.
"""

import numpy as np

from qwinsim import DeviceParams, ServiceEstimator
from qwinsim.device import sample_service_time
from qwinsim.sim_core import make_stream

params = DeviceParams(read_median_us=100.0, sigma=0.3,
                      p_spike=0.001, m_spike=20.0)
rng = make_stream(7, 0)

print("analytic curve (4 KiB reads):")
print(f"  median {params.median_ns(True, 4096) / 1e3:8.1f}us")
print(f"  mean   {params.nominal_mean_ns(True, 4096) / 1e3:8.1f}us")
for q in (0.9, 0.99, 0.999, 0.9999):
    print(f"  p{q * 100:<6g} {params.nominal_quantile_ns(True, 4096, q) / 1e3:8.1f}us")

print("\nlarger requests scale the median by (size/4KiB)^0.5:")
for size in (4096, 16384, 65536, 262144):
    print(f"  {size // 1024:4d} KiB -> median "
          f"{params.median_ns(True, size) / 1e3:7.1f}us")

N = 200_000
samples = np.array([sample_service_time(params, True, 4096, rng)
                    for _ in range(N)])
spikes = int((samples > 1_000_000).sum())
print(f"\n{N} sampled service times:")
print(f"  empirical median {np.median(samples) / 1e3:7.1f}us, "
      f"mean {samples.mean() / 1e3:7.1f}us")
print(f"  p99.9 {np.quantile(samples, 0.999) / 1e3:8.1f}us "
      f"(spike tail kicks in past p{100 * (1 - params.p_spike):g})")
print(f"  {spikes} samples above 1ms "
      f"(expected about {N * params.p_spike:.0f} spikes)")

print("\nonline estimators fed those same samples:")
est = ServiceEstimator(alpha=0.01, window=10_000, quantile=0.999,
                       nominal_mean_ns=params.nominal_mean_ns(True, 4096),
                       nominal_tail_ns=round(
                           params.nominal_quantile_ns(True, 4096, 0.999)))
checkpoints = {1_000, 10_000, 100_000, N}
for i, s in enumerate(samples, 1):
    est.update(int(s))
    if i in checkpoints:
        print(f"  after {i:6d} samples: mean {est.mean_ns / 1e3:6.1f}us, "
              f"tail {est.tail_ns / 1e3:7.1f}us")
print("\nThe EWMA tracks the mean; the sliding histogram keeps the tail "
      "honest\nover the most recent window without storing raw samples.")
