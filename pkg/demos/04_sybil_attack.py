"""Sybil identities steal slots; authentication limits how many.

The attacker sits on the unused device D4 and requests resources under up to
14 identities that belong to other inactive devices. Each forged request
passes the fingerprint test with its own missed-detection rate, and every
accepted one takes a share of the frame. The arrival rate is fixed at 90% of
the service that remains with authentication switched on and all 14
identities in use.
"""

import math

from pladelay.config import scenario_from_dict
from pladelay.experiments import Experiment

base = {
    "pla": {"p_fa": 0.01},
    "attack": {"type": "sybil", "eve": {"device": "D4"}},
    "snc": {"u": 0.9, "u_reference": "protected-full-attack", "epsilon": 1e-6},
}

ex = Experiment(scenario_from_dict({**base, "attack": {**base["attack"], "n_sybil": 14}}))
rates = ex.sybil_md_rates(ex.sybil_pool, ex.pla)
print("per-identity acceptance:", ", ".join(f"{d}={r:.2g}" for d, r in zip(ex.sybil_pool, rates)))
print(f"expected accepted identities with all 14: {sum(rates):.2f}\n")

print(" |D_Sybil|  w with PLA  w without")
for n in range(15):
    sc = {**base, "attack": {**base["attack"], "n_sybil": n}}
    w_pla = Experiment(scenario_from_dict(sc)).delay_guarantee()
    w_off = Experiment(scenario_from_dict({**sc, "pla": {"enabled": False}})).delay_guarantee()
    show = lambda w: "unbounded" if math.isinf(w) else f"{w:.0f}"
    print(f"{n:9d}  {show(w_pla):>10}  {show(w_off):>9}")
