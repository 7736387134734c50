"""Delay guarantees of an attack-free link and the price of false alarms.

A false alarm drops the frame's service, so a stricter detector costs delay.
For the device D12 we print the delay that holds with probability 1 - 1e-6
while the false-alarm rate goes from 1e-5 to 1e-1, at two utilizations.
"""

import numpy as np

from pladelay.config import scenario_from_dict
from pladelay.experiments import Experiment

p_fas = np.geomspace(1e-5, 1e-1, 9)
print("   p_FA     w(u=0.5)  w(u=0.9)   [frames]")
for p in p_fas:
    row = []
    for u in (0.5, 0.9):
        ex = Experiment(scenario_from_dict({"pla": {"p_fa": float(p)}, "snc": {"u": u, "epsilon": 1e-6}}))
        row.append(ex.delay_guarantee())
    print(f"{p:9.1e}  {row[0]:8.0f}  {row[1]:8.0f}")

ex = Experiment(scenario_from_dict({"pla": {"p_fa": 0.01}, "snc": {"u": 0.5}}))
print(f"\narrival rate at u=0.5: {ex.alpha:.1f} bits/frame")
print("violation bound by delay:")
for w in range(0, 7):
    r = ex.bound_frames(w)
    print(f"  w={w}: {r.bound:.3e}  (s*={r.s_star:.3e})")
