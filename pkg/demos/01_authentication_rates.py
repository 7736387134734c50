"""How well does the channel fingerprint separate a device from an impostor?

We place the attacker on a circle of 30 m around the access point and sweep
its angle of arrival. For every angle the script prints the closed-form
missed-detection rate, the Chernoff bound on "attacker looks more legitimate
than the device", and the two-message bounds next to a Monte Carlo estimate.
"""

import math

import numpy as np

from pladelay.channel import ArrayConfig, device_stats, position_from_polar, square_grid_deployment
from pladelay.pla import chernoff_pd, impersonation_params, md_l2_bounds, missed_detection_rate, threshold_for_fa
from pladelay.sim import detection_mc

dep = square_grid_deployment()
legit = dep.stats("D12")
t = threshold_for_fa(1e-2, dep.array.n_rx)
rng = np.random.default_rng(1)

print(f"threshold for 1% false alarms with {dep.array.n_rx} antennas: T = {t:.3f}\n")
print("  AoA    p_MD      Chernoff   L=2 lower  L=2 MC     L=2 upper")
for aoa in np.linspace(math.pi / 4, 3 * math.pi / 4, 9):
    eve = device_stats(position_from_polar(30.0, aoa, dep.array), 1.0, dep.array, dep.pathloss)
    p = impersonation_params(legit, eve)
    lo, hi = md_l2_bounds(t, p)
    mc = detection_mc(legit, t, 200_000, rng, eve)["p_md_l2"].estimate
    print(f"{aoa:6.3f}  {missed_detection_rate(t, p):.2e}  {chernoff_pd(p):.2e}  {lo:.2e}   {mc:.2e}   {hi:.2e}")

# More antennas sharpen the fingerprint: the forged request from (25, 0) m
# slips through less and less often.
print("\n N_Rx  p_MD")
for n_rx in (1, 2, 4, 8, 16):
    d = square_grid_deployment(array=ArrayConfig(n_rx=n_rx))
    eve = device_stats((25.0, 0.0), d.rice_k, d.array, d.pathloss)
    print(f"{n_rx:5d}  {missed_detection_rate(threshold_for_fa(1e-2, n_rx), impersonation_params(d.stats('D12'), eve)):.3e}")
