"""Forged disassociation messages: coin flips versus fingerprints.

When the access point sees two disassociation-related messages claiming the
same identity it must pick one. Without authentication it guesses; with it,
the message whose channel fits the device better wins. A successful attack
cuts the device off for k_rc = 4 frames.
"""

import math

from pladelay.config import scenario_from_dict
from pladelay.experiments import Experiment

base = {
    "pla": {"p_fa": 0.01},
    "attack": {"type": "disassociation", "eve": {"distance": 25.0, "aoa": math.pi / 3, "rice_k_db": 0.0}, "k_rc": 4},
    "snc": {"u": 0.9, "epsilon": 1e-6},
}


def guarantee(p_attack, **over):
    sc = {**base, **over, "attack": {**base["attack"], "p_attack": p_attack}}
    ex = Experiment(scenario_from_dict(sc))
    return ex.delay_guarantee(), ex.attack_success


print(" p_attack   no PLA      PLA, 4 ant.  PLA, 8 ant.")
for p in (0.0, 0.01, 0.05, 0.1, 0.5, 1.0):
    cells = [
        guarantee(p, pla={"enabled": False}),
        guarantee(p),
        guarantee(p, deployment={"n_rx": 8}),
    ]
    show = ["unbounded" if math.isinf(w) else f"{w:.0f}" for w, _ in cells]
    print(f"{p:9.2f}  {show[0]:>9}  {show[1]:>11}  {show[2]:>11}")
print(f"\nper-attack success: guessing 0.5, 4 antennas {guarantee(0)[1]:.2e}, 8 antennas {guarantee(0, deployment={'n_rx': 8})[1]:.2e}")
